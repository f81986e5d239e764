//! Maximum-likelihood fit of an asymptotic growth curve to a CSV.
//!
//! ```text
//! cargo run --example fit_model [data.csv]
//! ```

use std::path::PathBuf;

use odesel::bundled;
use odesel::cli::read_csv;
use odesel::likelihood::{fit_mle, FitOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_yield.csv"));
    let data = read_csv(&path).map_err(|e| e.message)?;
    let model = bundled::load("exponential").expect("bundled");
    println!("{}\n", model.render());

    let init = model.initial_eta().expect("init header");
    let fit = fit_mle(&model, &data, &init, &FitOptions::default())?;
    let c = &fit.convergence;
    println!(
        "converged: {} after {} iterations ({} starts, best {}, {} integrations)",
        c.converged, c.iterations, c.starts, c.best_start, c.integration_calls
    );
    println!("sigma2  = {:.5}", fit.theta_hat.sigma2[0]);
    println!("x(0)    = {:.5}", fit.theta_hat.xi[0]);
    for (name, v) in fit.param_names.iter().zip(&fit.theta_hat.psi) {
        println!("{name:<7} = {v:.5}");
    }
    println!("loglik  = {:.4} over {} observations", fit.total_loglik, fit.n_obs());

    // sandwich standard errors: H^-1 V H^-1 / n
    let n = fit.n_obs() as f64;
    if let Some(hinv) = fit.h_hat.clone().try_inverse() {
        let cov = &hinv * &fit.v_hat * &hinv / n;
        let labels = ["sigma2", "x(0)", "psi1", "psi2"];
        println!("\nrobust standard errors:");
        for (k, l) in labels.iter().enumerate() {
            println!("  {l:<7} {:.5}", cov[(k, k)].sqrt());
        }
    }
    Ok(())
}
