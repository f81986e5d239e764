//! Monte Carlo size of the regularized LR test: two linear models equally far from the
//! truth should be told apart about `alpha` of the time.
//!
//! ```text
//! cargo run --release --example size_study [reps]
//! ```

use odesel::simulation::{kl_linear, size_study, Sampling, SizeStudyConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    for sampling in [Sampling::Uniform, Sampling::Equispaced] {
        let cfg = SizeStudyConfig {
            reps,
            sampling,
            ..SizeStudyConfig::default()
        };
        let r = size_study(&cfg)?;
        println!("{sampling:?} times, n = {}, tau = {}, {} reps", cfg.n, cfg.tau, reps);
        println!("{:>6} {:>10} {:>8} {:>8} {:>8} {:>8}", "delta", "KL", "rate", "mc se", "favor A", "favor B");
        for c in &r.cells {
            let kl = kl_linear(c.value, cfg.sigma, -0.05, cfg.tau)?;
            println!(
                "{:>6} {:>10.5} {:>8.3} {:>8.3} {:>8} {:>8}",
                c.value, kl, c.rate, c.mc_se, c.favor_a, c.favor_b
            );
        }
        println!();
    }
    Ok(())
}
