//! Forward sensitivities and second-order variations of a Lotka-Volterra
//! system, checked against finite differences.
//!
//! ```text
//! cargo run --example sensitivities
//! ```

use odesel::bundled;
use odesel::integrator::{integrate, integrate_with_variations, IntegratorOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = bundled::load("gause_model1").expect("bundled");
    let eta = model.initial_eta().expect("init header");
    let names = model.eta_names();
    let times: Vec<f64> = (0..=8).map(|i| 0.5 * i as f64).collect();
    let opts = IntegratorOptions::with_tolerances(1e-10, 1e-12);

    let var = integrate_with_variations(&model, &eta, &times, &opts)?;
    let traj = &var.base.base;

    println!("{:>5} {:>12} {:>12}", "t", "x1", "x2");
    for (i, t) in times.iter().enumerate() {
        println!("{t:>5.1} {:>12.4} {:>12.4}", traj.state(i, 0), traj.state(i, 1));
    }

    let last = times.len() - 1;
    println!("\nd x(t = {}) / d eta, with central differences:", times[last]);
    for (k, name) in names.iter().enumerate() {
        let h = 1e-6 * (1.0 + eta[k].abs());
        let mut up = eta.clone();
        let mut down = eta.clone();
        up[k] += h;
        down[k] -= h;
        let p = integrate(&model, &up, &times, &opts)?;
        let q = integrate(&model, &down, &times, &opts)?;
        for j in 0..model.dim() {
            let fd = (p.state(last, j) - q.state(last, j)) / (2.0 * h);
            println!(
                "  d{}/d{:<5} {:>14.6e}  fd {:>14.6e}",
                model.state_names()[j],
                name,
                var.base.sens(last, j, k),
                fd
            );
        }
    }

    println!("\nd2 x1 / d psi_a d psi_b at t = {}:", times[last]);
    let d = model.dim();
    for a in d..names.len() {
        let row: Vec<String> = (d..names.len())
            .map(|b| format!("{:>12.4e}", var.var2(last, 0, a, b)))
            .collect();
        println!("  {:<5} {}", names[a], row.join(" "));
    }
    Ok(())
}
