//! JSON and markdown reports. Both render the same `serde_json::Value`, so
//! they carry the same numbers: full precision in JSON, six significant
//! digits in markdown.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::likelihood::FitResult;
use crate::simulation::StudyResult;
use crate::swtest::{Decision, SwTestResult};
use crate::tournament::{PairRow, Tally, TournamentReport};

/// Version of the JSON report layout in `schema/report-v1.json`.
pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionInfo {
    pub schema: String,
    pub odesel: String,
}

impl Default for VersionInfo {
    fn default() -> Self {
        VersionInfo {
            schema: SCHEMA_VERSION.into(),
            odesel: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub index: usize,
    pub model: String,
    pub fitted: bool,
    pub error: Option<String>,
    pub n: Option<usize>,
    pub state_names: Vec<String>,
    pub param_names: Vec<String>,
    pub sigma2: Vec<f64>,
    pub xi: Vec<f64>,
    pub psi: Vec<f64>,
    pub total_loglik: Option<f64>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub gradient_norm: Option<f64>,
    pub objective: Option<f64>,
    pub starts: Option<usize>,
    pub failed_starts: Option<usize>,
    pub integration_calls: Option<usize>,
    pub mean_score_norm: Option<f64>,
    /// Row-major `H_hat`, `(2d + p)` square.
    pub h_hat: Vec<Vec<f64>>,
    pub v_hat: Vec<Vec<f64>>,
    pub tally: Option<Tally>,
    pub rank: Option<usize>,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl FitSummary {
    pub fn from_fit(index: usize, fit: &FitResult) -> Self {
        let c = &fit.convergence;
        FitSummary {
            index,
            model: fit.model_name.clone(),
            fitted: true,
            error: None,
            n: Some(fit.n_obs()),
            state_names: fit.state_names.clone(),
            param_names: fit.param_names.clone(),
            sigma2: fit.theta_hat.sigma2.clone(),
            xi: fit.theta_hat.xi.clone(),
            psi: fit.theta_hat.psi.clone(),
            total_loglik: Some(fit.total_loglik),
            converged: Some(c.converged),
            iterations: Some(c.iterations),
            gradient_norm: Some(c.gradient_norm),
            objective: Some(c.objective),
            starts: Some(c.starts),
            failed_starts: Some(c.failed_starts),
            integration_calls: Some(c.integration_calls),
            mean_score_norm: Some(fit.mean_score().norm()),
            h_hat: rows(&fit.h_hat),
            v_hat: rows(&fit.v_hat),
            tally: None,
            rank: None,
        }
    }

    pub fn failed(index: usize, model: &str, error: String) -> Self {
        FitSummary {
            index,
            model: model.into(),
            fitted: false,
            error: Some(error),
            n: None,
            state_names: Vec::new(),
            param_names: Vec::new(),
            sigma2: Vec::new(),
            xi: Vec::new(),
            psi: Vec::new(),
            total_loglik: None,
            converged: None,
            iterations: None,
            gradient_norm: None,
            objective: None,
            starts: None,
            failed_starts: None,
            integration_calls: None,
            mean_score_norm: None,
            h_hat: Vec::new(),
            v_hat: Vec::new(),
            tally: None,
            rank: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub index_a: usize,
    pub index_b: usize,
    pub model_a: String,
    pub model_b: String,
    /// Name of the favored model, empty when the null is retained.
    pub in_favor: Option<String>,
    pub adjusted_alpha: Option<f64>,
    pub adjusted_decision: Option<Decision>,
    pub error: Option<String>,
    pub result: Option<SwTestResult>,
}

impl TestRow {
    pub fn from_pair(row: &PairRow, adjusted_alpha: Option<f64>) -> Self {
        let in_favor = match row.effective_decision() {
            Some(Decision::FavorA) => Some(row.model_a.clone()),
            Some(Decision::FavorB) => Some(row.model_b.clone()),
            _ => None,
        };
        TestRow {
            index_a: row.index_a,
            index_b: row.index_b,
            model_a: row.model_a.clone(),
            model_b: row.model_b.clone(),
            in_favor,
            adjusted_alpha,
            adjusted_decision: row.adjusted_decision,
            error: row.error.clone(),
            result: row.result.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: VersionInfo,
    pub config: Value,
    pub fits: Vec<FitSummary>,
    pub tests: Vec<TestRow>,
    pub study: Option<StudyResult>,
}

impl Report {
    pub fn new(config: &impl Serialize) -> Self {
        Report {
            version: VersionInfo::default(),
            config: serde_json::to_value(config).expect("config serializes"),
            fits: Vec::new(),
            tests: Vec::new(),
            study: None,
        }
    }

    /// Fits, pair rows, tallies and ranks of a tournament.
    pub fn with_tournament(mut self, t: &TournamentReport) -> Self {
        self.fits = t
            .fits
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut s = match f {
                    Ok(fit) => FitSummary::from_fit(i, fit),
                    Err(e) => FitSummary::failed(i, &t.models[i].name, e.to_string()),
                };
                s.tally = Some(t.models[i].tally.clone());
                s.rank = t.ranking.iter().position(|&r| r == i).map(|r| r + 1);
                s
            })
            .collect();
        self.tests = t
            .rows
            .iter()
            .map(|r| TestRow::from_pair(r, t.adjusted_alpha))
            .collect();
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_markdown(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        render_markdown(&v)
    }
}

/// `x` to six significant digits, plain notation for exponents in
/// `[-5, 6)` and scientific otherwise, trailing zeros removed.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, x);
        trim_zeros(&s).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => {
            if n.is_f64() {
                sig6(n.as_f64().unwrap_or(f64::NAN))
            } else {
                n.to_string()
            }
        }
        Value::String(s) => s.clone(),
        Value::Array(a) => format!("[{}]", a.iter().map(scalar).collect::<Vec<_>>().join(", ")),
        Value::Object(_) => "{..}".into(),
    }
}

fn is_matrix(v: &Value) -> bool {
    matches!(v, Value::Array(rows) if !rows.is_empty() && rows.iter().all(Value::is_array))
}

// one bullet per leaf, nested objects flattened to dotted keys
fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Array(items) if items.iter().any(|i| i.is_object()) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), child, out);
            }
        }
        _ if is_matrix(v) => {
            let _ = writeln!(out, "- {prefix}:");
            out.push('\n');
            matrix_table(v, out);
        }
        _ => {
            let _ = writeln!(out, "- {prefix}: {}", scalar(v));
        }
    }
}

fn matrix_table(v: &Value, out: &mut String) {
    let rows = v.as_array().expect("matrix");
    let width = rows.iter().map(|r| r.as_array().map_or(0, Vec::len)).max().unwrap_or(0);
    out.push('|');
    for j in 0..width {
        let _ = write!(out, " {j} |");
    }
    out.push_str("\n|");
    for _ in 0..width {
        out.push_str("---|");
    }
    out.push('\n');
    for r in rows {
        out.push('|');
        for c in r.as_array().into_iter().flatten() {
            let _ = write!(out, " {} |", scalar(c));
        }
        out.push('\n');
    }
    out.push('\n');
}

fn get<'a>(v: &'a Value, path: &[&str]) -> &'a Value {
    path.iter().fold(v, |v, k| v.get(k).unwrap_or(&Value::Null))
}

fn render_markdown(report: &Value) -> String {
    let mut out = String::new();
    let version = get(report, &["version"]);
    let _ = writeln!(
        out,
        "# odesel report\n\nodesel {}, report schema {}\n",
        scalar(get(version, &["odesel"])),
        scalar(get(version, &["schema"]))
    );

    let fits = report["fits"].as_array().cloned().unwrap_or_default();
    if !fits.is_empty() {
        out.push_str("## Fits\n\n");
        out.push_str("| # | Model | Log-likelihood | Converged | Rank | Wins | Losses | Retains |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for f in &fits {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                scalar(&f["index"]),
                scalar(&f["model"]),
                scalar(&f["total_loglik"]),
                scalar(&f["converged"]),
                scalar(&f["rank"]),
                scalar(get(f, &["tally", "wins"])),
                scalar(get(f, &["tally", "losses"])),
                scalar(get(f, &["tally", "retains"])),
            );
        }
        out.push('\n');
        for f in &fits {
            let _ = writeln!(out, "### {}\n", scalar(&f["model"]));
            estimates_table(f, &mut out);
            flatten("", f, &mut out);
            out.push('\n');
        }
    }

    let tests = report["tests"].as_array().cloned().unwrap_or_default();
    if !tests.is_empty() {
        out.push_str("## Tests\n\n");
        out.push_str("| Model A | Model B | LR statistic | h_n | Decision | In favor |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for t in &tests {
            let decision = match &t["adjusted_decision"] {
                Value::Null => get(t, &["result", "decision"]),
                d => d,
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                scalar(&t["model_a"]),
                scalar(&t["model_b"]),
                scalar(get(t, &["result", "t_stat"])),
                scalar(get(t, &["result", "h_n"])),
                scalar(decision),
                match &t["in_favor"] {
                    Value::Null => String::new(),
                    v => scalar(v),
                },
            );
        }
        out.push('\n');
        for t in &tests {
            let _ = writeln!(out, "### {} vs {}\n", scalar(&t["model_a"]), scalar(&t["model_b"]));
            flatten("", t, &mut out);
            out.push('\n');
        }
    }

    if let Some(study) = report.get("study").filter(|s| !s.is_null()) {
        let _ = writeln!(out, "## Study: {}\n", scalar(&study["study"]));
        let _ = writeln!(out, "| {} | Replications | Failures | Rejections | Favor A | Favor B | Rate | MC s.e. |", scalar(&study["grid_name"]));
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for c in study["cells"].as_array().into_iter().flatten() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                scalar(&c["value"]),
                scalar(&c["replications"]),
                scalar(&c["failures"]),
                scalar(&c["rejections"]),
                scalar(&c["favor_a"]),
                scalar(&c["favor_b"]),
                scalar(&c["rate"]),
                scalar(&c["mc_se"]),
            );
        }
        out.push('\n');
        flatten("", study, &mut out);
        out.push('\n');
    }

    out.push_str("## Configuration\n\n");
    flatten("", &report["config"], &mut out);
    out
}

fn estimates_table(f: &Value, out: &mut String) {
    let names = |k: &str| -> Vec<String> {
        f[k].as_array().into_iter().flatten().map(scalar).collect()
    };
    let (states, params) = (names("state_names"), names("param_names"));
    if states.is_empty() {
        return;
    }
    out.push_str("| Parameter | Estimate |\n|---|---|\n");
    let mut line = |label: String, v: &Value| {
        let _ = writeln!(out, "| {label} | {} |", scalar(v));
    };
    for (j, s) in states.iter().enumerate() {
        line(format!("sigma2[{s}]"), &f["sigma2"][j]);
    }
    for (j, s) in states.iter().enumerate() {
        line(format!("{s}(0)"), &f["xi"][j]);
    }
    for (a, p) in params.iter().enumerate() {
        line(p.clone(), &f["psi"][a]);
    }
    out.push('\n');
}

/// Every number in `v`, rendered as markdown renders it.
pub fn rendered_numbers(v: &Value) -> Vec<String> {
    let mut acc = Vec::new();
    fn walk(v: &Value, acc: &mut Vec<String>) {
        match v {
            Value::Number(_) => acc.push(scalar(v)),
            Value::Array(a) => a.iter().for_each(|x| walk(x, acc)),
            Value::Object(m) => m.values().for_each(|x| walk(x, acc)),
            _ => {}
        }
    }
    walk(v, &mut acc);
    acc
}
