// How each penalty reacts to one high-reward outlier in a neighborhood.
//
// ```bash
// cargo run --example shaping_curve
// ```

use adac::theory::shaping_sweep;
use adac::PenaltyMode;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let modes = [
        PenaltyMode::Averagers,
        PenaltyMode::Fixed { c: 1.0 },
        PenaltyMode::Fixed { c: 4.0 },
        PenaltyMode::Adaptive,
    ];
    let r_max: Vec<f64> = (1..=10).map(f64::from).collect();
    let rows = shaping_sweep(5, 0.2, 0.8, &r_max, &modes);
    println!("r_max  {:>9} {:>9} {:>9} {:>9}", "none", "fixed:1", "fixed:4", "adaptive");
    for chunk in rows.chunks(modes.len()) {
        let cols: Vec<String> = chunk.iter().map(|r| format!("{:>9.3}", r.shaped_reward)).collect();
        println!("{:>5}  {}", chunk[0].r_max, cols.join(" "));
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
