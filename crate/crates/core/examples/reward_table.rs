// Shaped rewards of the six-transition intersection batch under each penalty.
//
// ```bash
// cargo run --example reward_table
// ```

use adac::eval::{reproduce_table2, TABLE2_TOLERANCE};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cells = reproduce_table2();
    println!("{:<8} {:<3} {:<10} {:>9} {:>8}", "state", "a", "column", "computed", "printed");
    for c in &cells {
        let flag = if c.matches { "" } else { "  <- differs" };
        println!(
            "({},{})    {:<3} {:<10} {:>9.4} {:>8.2}{flag}",
            c.state[0], c.state[1], c.action, c.column, c.computed, c.printed
        );
    }
    let misses = cells.iter().filter(|c| !c.matches).count();
    println!("{misses} of {} cells outside +/-{TABLE2_TOLERANCE}", cells.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
