//! Every pairwise regularized LR test among four predator-prey variants, with a
//! Bonferroni correction, rendered as markdown.
//!
//! ```text
//! cargo run --release --example tournament [data.csv]
//! ```

use std::path::PathBuf;

use odesel::bundled;
use odesel::cli::read_csv;
use odesel::dsl::OdeModel;
use odesel::report::Report;
use odesel::tournament::{run_tournament, TournamentOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic_logistic_prey.csv")
    });
    let data = read_csv(&path).map_err(|e| e.message)?;

    let models: Vec<OdeModel> = ["gause_model1", "gause_model2", "gause_model3", "gause_model4"]
        .iter()
        .map(|s| bundled::load(s).expect("bundled"))
        .collect();
    let inits: Vec<Vec<f64>> = models
        .iter()
        .map(|m| m.initial_eta().expect("init header"))
        .collect();
    let opts = TournamentOptions {
        bonferroni: true,
        ..TournamentOptions::default()
    };
    let t = run_tournament(&models, &data, &inits, &opts)?;

    let ranking: Vec<&str> = t.ranking.iter().map(|&i| t.models[i].name.as_str()).collect();
    println!("ranking: {}\n", ranking.join(" > "));

    let config = serde_json::json!({ "data": path.display().to_string(), "options": opts });
    print!("{}", Report::new(&config).with_tournament(&t).to_markdown());
    Ok(())
}
