// Collect a batch with a noisy behavior policy, write it as JSON Lines and
// read it back.
//
// ```bash
// cargo run --example batch_io
// ```

use adac::dataset::{batch_stats, load_batch, save_batch};
use adac::env::{EnvState, IntersectionEnvConfig};
use adac::policy::{collect, Policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = IntersectionEnvConfig::multi_flow(3);
    let mut behavior = Policy::epsilon_noisy(Policy::cyclic(4), 0.2, 4, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = collect(&config, &mut behavior, 3, 50, &EnvState::new(vec![0; 4]), &mut rng)?;

    let path = std::env::temp_dir().join(format!("adac_batch_io_{}.jsonl", std::process::id()));
    save_batch(&batch, &path)?;
    let loaded = load_batch(&path)?;
    std::fs::remove_file(&path)?;

    assert_eq!(loaded.transitions(), batch.transitions());
    println!("{:?}", batch_stats(&loaded));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
