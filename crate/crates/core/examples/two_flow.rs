// Learn a signal controller from two short cyclic trajectories and compare it
// with the cyclic behavior policy on the deterministic two-flow intersection.
//
// ```bash
// cargo run --release --example two_flow
// ```

use std::sync::Arc;

use adac::eval::{evaluate, EvalSettings};
use adac::policy::{two_flow_cyclic_batch, Policy, TWO_FLOW_DEMO_HORIZON};
use adac::{DeriveParams, DerivedController, PenaltyMode};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let batch = two_flow_cyclic_batch(TWO_FLOW_DEMO_HORIZON)?;
    let settings = EvalSettings::two_flow(100);

    let cyclic = evaluate(&Policy::cyclic(2), &settings)?;
    println!("cyclic: {}", cyclic.mean_return);

    for mode in [PenaltyMode::Averagers, PenaltyMode::Adaptive] {
        let params = DeriveParams {
            k: 3,
            alpha: f64::INFINITY,
            gamma: 0.99,
            mode,
            ..DeriveParams::default()
        };
        let controller = DerivedController::train(&batch, &params, 1e-9, 1_000_000)?;
        let report = evaluate(&Policy::greedy(Arc::new(controller)), &settings)?;
        println!("greedy {mode}: {}", report.mean_return);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
