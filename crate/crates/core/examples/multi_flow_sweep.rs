// Sweep the fixed penalty cost on a four-flow intersection with Poisson
// arrivals and compare against the adaptive penalty.
//
// ```bash
// cargo run --release --example multi_flow_sweep
// ```

use adac::env::{EnvState, IntersectionEnvConfig};
use adac::eval::{evaluate, sweep_c, sweep_csv, EvalSettings, SweepParams};
use adac::policy::{collect, Policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let segment = 120;
    let config = IntersectionEnvConfig::multi_flow_day(7, segment);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = collect(
        &config,
        &mut Policy::cyclic(config.action_count()),
        10,
        segment as usize,
        &EnvState::new(vec![0; 4]),
        &mut rng,
    )?;
    let settings = EvalSettings::multi_flow_day(11, segment);
    let baseline = evaluate(&Policy::cyclic(config.action_count()), &settings)?;
    println!("cyclic mean return {:.1}", baseline.mean_return);
    let rows = sweep_c(&batch, &[0.0, 1.0, 4.0], &SweepParams::default(), &settings, None)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
