// Derive an MDP from a batch, solve it, and act in a state the batch never
// visited.
//
// ```bash
// cargo run --example derive_and_solve
// ```

use adac::dataset::table1_batch;
use adac::planner::{greedy_action, lookup_q};
use adac::{build_mdp, value_iteration, DeriveParams, PenaltyMode, StateVector};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let batch = table1_batch();
    let query = StateVector::from([1.0, 4.0]);

    for mode in [PenaltyMode::Averagers, PenaltyMode::Fixed { c: 1.0 }, PenaltyMode::Adaptive] {
        let params = DeriveParams {
            k: 3,
            alpha: f64::INFINITY,
            gamma: 0.99,
            mode,
            ..DeriveParams::default()
        };
        let mdp = build_mdp(&batch, &params)?;
        let sol = value_iteration(&mdp, 1e-9, 1_000_000)?;
        let index = mdp.index_for(&batch);
        let q: Vec<f64> = (0..2).map(|a| lookup_q(&mdp, &sol, &index, &query, a)).collect();
        let a = greedy_action(&mdp, &sol, &index, &query);
        println!(
            "{:<8} {} states, {} sweeps, Q(1,4) = [NS {:.2}, EW {:.2}] -> {}",
            mode.to_string(),
            mdp.state_count(),
            sol.iterations,
            q[0],
            q[1],
            ["NS", "EW"][a]
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
