// Covering number, sampling error, admissible k and value-gap bound for a
// solved derivation.
//
// ```bash
// cargo run --example pac_bounds
// ```

use adac::dataset::table1_batch;
use adac::theory::{covering_number, k_window, pac_bound, value_gap};
use adac::{build_mdp, value_iteration, DeriveParams};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let batch = table1_batch();
    let params = DeriveParams {
        k: 3,
        alpha: f64::INFINITY,
        ..DeriveParams::default()
    };
    for alpha in [0.05, 0.2, 0.5, 1.0] {
        println!("cover at alpha {alpha}: {}", covering_number(&batch, alpha, params.metric));
    }

    let mdp = build_mdp(&batch, &params)?;
    let sol = value_iteration(&mdp, 1e-9, 1_000_000)?;
    let index = mdp.index_for(&batch);
    let report = pac_bound(&batch, &mdp, &sol, &index, 0.1, 0.2);
    println!("{}", serde_json::to_string_pretty(&report)?);

    let w = k_window(10.0, 1.0, 100, 0.1);
    println!("k window for Q_max 10, eps 1, N 100, delta 0.1: [{}, {}]", w.k_min, w.k_max);
    println!("gap(eps 1, d 0.1, R 5, gamma 0.9) = {}", value_gap(1.0, 0.1, 5.0, 0.9));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
