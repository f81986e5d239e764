//! Monte Carlo power of the regularized LR test: how often plain Lotka-Volterra loses
//! to the logistic-prey model that generated the data.
//!
//! ```text
//! cargo run --release --example power_study [reps]
//! ```

use odesel::simulation::{power_study, PowerGrid, PowerStudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let grids = [
        (
            PowerGrid::Psi5 {
                values: vec![0.0025, 0.05, 0.1, 0.25],
                n: 20,
            },
            0.1,
        ),
        (
            PowerGrid::N {
                values: vec![20, 60, 110],
                psi5: 0.1,
            },
            0.2,
        ),
    ];
    for (grid, sigma) in grids {
        let cfg = PowerStudyConfig {
            grid,
            reps,
            sigma,
            ..PowerStudyConfig::default()
        };
        let r = power_study(&cfg)?;
        println!("grid over {}, sigma = {sigma}, {reps} reps", r.grid_name);
        println!("{:>8} {:>8} {:>8} {:>8}", r.grid_name, "power", "mc se", "failed");
        for c in &r.cells {
            println!("{:>8} {:>8.3} {:>8.3} {:>8}", c.value, c.rate, c.mc_se, c.failures);
        }
        println!();
    }
    Ok(())
}
