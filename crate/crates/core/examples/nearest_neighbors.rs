// Per-action neighbor queries with normalized distances and a threshold.
//
// ```bash
// cargo run --example nearest_neighbors
// ```

use adac::dataset::table1_batch;
use adac::neighbors::{MetricConfig, Norm};
use adac::{NeighborIndex, StateVector};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let batch = table1_batch();
    for norm in [Norm::Euclidean, Norm::Manhattan] {
        let metric = MetricConfig {
            norm,
            ..MetricConfig::default()
        };
        let index = NeighborIndex::build(&batch, metric);
        println!("{norm:?}: diameter {:.4}", index.diameter().value);
        let s = StateVector::from([1.0, 4.0]);
        for (alpha, label) in [(f64::INFINITY, "no threshold"), (0.15, "alpha 0.15")] {
            let found = index.query(&s, 1, 3, alpha);
            let listed: Vec<String> = found
                .entries
                .iter()
                .map(|n| format!("#{} d'={:.3}", n.index, n.normalized))
                .collect();
            println!("  EW near (1,4), {label}: {}", listed.join(", "));
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
