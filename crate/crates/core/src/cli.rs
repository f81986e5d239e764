//! The `odesel` command line: `fit`, `test`, `tournament` and `simulate`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dsl::{parse_model, OdeModel};
use crate::error::FitError;
use crate::integrator::IntegratorOptions;
use crate::likelihood::{Dataset, FitOptions};
use crate::report::{FitSummary, Report};
use crate::simulation::{
    power_study, size_study, PowerGrid, PowerStudyConfig, Sampling, SizeStudyConfig,
};
use crate::tournament::{run_tournament, TournamentOptions, TournamentReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "odesel", version, about = "Select among competing ODE models with the regularized LR test")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model by maximum likelihood.
    Fit(ModelArgs),
    /// Fit two models and run the regularized LR test.
    Test(ModelArgs),
    /// Fit N models and test all pairs.
    Tournament(ModelArgs),
    /// Run a Monte Carlo size or power study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// CSV with a `t` column and one column per state.
    #[arg(long)]
    data: PathBuf,
    /// Model file; repeat for several models.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Starting value, `NAME=VAL` for every model or `model:NAME=VAL` for one.
    #[arg(long = "init")]
    inits: Vec<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Test every pair at alpha divided by the number of pairs.
    #[arg(long)]
    bonferroni: bool,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Perturbed restarts per fit, on top of the initial guess.
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StudyKind {
    /// Linear DGP, models at equal distance: rejection rate is the size.
    Size,
    /// Lotka-Volterra with logistic prey, over a grid of psi5.
    PowerPsi5,
    /// Lotka-Volterra with logistic prey, over a grid of sample sizes.
    PowerN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    Uniform,
    Equispaced,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = StudyKind::Size)]
    study: StudyKind,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated grid: deltas, psi5 values or sample sizes.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Observations per dataset (size and psi5 studies).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Fixed psi5 of the sample-size study.
    #[arg(long)]
    psi5: Option<f64>,
    /// Observation times of the size study.
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        let code = match e {
            FitError::Dimension(_) | FitError::InvalidInput(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// One model as resolved for a run.
#[derive(Debug, Clone, Serialize)]
pub struct ModelConfig {
    pub path: String,
    pub name: String,
    /// Starting values by state or parameter name.
    pub init: BTreeMap<String, f64>,
}

/// Everything that determines a run, embedded verbatim in its report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub data: Option<String>,
    pub models: Vec<ModelConfig>,
    pub alpha: f64,
    pub bonferroni: bool,
    pub seed: u64,
    pub format: Format,
    pub out: Option<String>,
    pub fit: Option<FitOptions>,
    pub size_study: Option<SizeStudyConfig>,
    pub power_study: Option<PowerStudyConfig>,
}

/// Read a data CSV: header row, first column `t`, other columns named after states.
pub fn read_csv(path: &Path) -> Result<Dataset, CliError> {
    let fail = |m: String| CliError::usage(format!("{}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| fail(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(fail("first column must be `t`".into()));
    }
    if header.len() < 2 {
        return Err(fail("no state columns after `t`".into()));
    }
    let mut times = Vec::new();
    let mut obs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                fail(format!("row {}, column `{}`: `{field}` is not a number", i + 2, header[j]))
            })?;
            if j == 0 {
                times.push(v);
            } else {
                obs.push(v);
            }
        }
    }
    Dataset::new(times, obs, header[1..].to_vec()).map_err(|e| fail(e.to_string()))
}

pub fn read_model(path: &Path) -> Result<OdeModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

struct InitArg {
    model: Option<String>,
    name: String,
    value: f64,
}

fn parse_init(s: &str) -> Result<InitArg, CliError> {
    let bad = || CliError::usage(format!("--init `{s}`: expected NAME=VAL or model:NAME=VAL"));
    let (lhs, value) = s.split_once('=').ok_or_else(bad)?;
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    let (model, name) = match lhs.split_once(':') {
        Some((m, n)) => (Some(m.trim().to_string()), n.trim().to_string()),
        None => (None, lhs.trim().to_string()),
    };
    if name.is_empty() {
        return Err(bad());
    }
    Ok(InitArg { model, name, value })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Starting vectors: the model file's `init:` header overridden by `--init`.
fn resolve_inits(
    models: &[OdeModel],
    paths: &[PathBuf],
    inits: &[String],
) -> Result<Vec<ModelConfig>, CliError> {
    let args: Vec<InitArg> = inits.iter().map(|s| parse_init(s)).collect::<Result<_, _>>()?;
    let mut used = vec![false; args.len()];
    let mut out = Vec::with_capacity(models.len());
    for (m, path) in models.iter().zip(paths) {
        let mut values: BTreeMap<String, f64> = m
            .initial_guess()
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let names = m.eta_names();
        for (arg, used) in args.iter().zip(&mut used) {
            let targeted = match &arg.model {
                Some(sel) => sel == m.name() || *sel == file_stem(path),
                None => true,
            };
            if targeted && names.contains(&arg.name) {
                values.insert(arg.name.clone(), arg.value);
                *used = true;
            }
        }
        let missing: Vec<&String> = names.iter().filter(|n| !values.contains_key(*n)).collect();
        if !missing.is_empty() {
            return Err(CliError::usage(format!(
                "model `{}` needs starting values for {}",
                m.name(),
                missing.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        out.push(ModelConfig {
            path: path.display().to_string(),
            name: m.name().to_string(),
            init: values,
        });
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(CliError::usage(format!(
            "--init `{}` matches no state or parameter of the selected models",
            inits[i]
        )));
    }
    Ok(out)
}

fn check_common(c: &CommonArgs) -> Result<(), CliError> {
    if !(c.alpha > 0.0 && c.alpha < 1.0) {
        return Err(CliError::usage(format!("--alpha must lie in (0, 1), got {}", c.alpha)));
    }
    for (flag, v) in [("--rel-tol", c.rel_tol), ("--abs-tol", c.abs_tol)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::usage(format!("{flag} must be positive, got {v}")));
            }
        }
    }
    Ok(())
}

fn fit_options(c: &CommonArgs, base: FitOptions) -> FitOptions {
    let defaults = IntegratorOptions::default();
    FitOptions {
        restarts: c.restarts.unwrap_or(base.restarts),
        seed: c.seed,
        integrator: IntegratorOptions {
            rel_tol: c.rel_tol.unwrap_or(defaults.rel_tol),
            abs_tol: c.abs_tol.unwrap_or(defaults.abs_tol),
            ..base.integrator
        },
        ..base
    }
}

fn write_report(report: &Report, c: &CommonArgs) -> Result<(), CliError> {
    let text = match c.format {
        Format::Json => report.to_json(),
        Format::Markdown => report.to_markdown(),
    };
    match &c.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::usage(e.to_string())),
    }
}

fn base_config(command: &str, c: &CommonArgs) -> RunConfig {
    RunConfig {
        command: command.into(),
        data: None,
        models: Vec::new(),
        alpha: c.alpha,
        bonferroni: c.bonferroni,
        seed: c.seed,
        format: c.format,
        out: c.out.as_ref().map(|p| p.display().to_string()),
        fit: None,
        size_study: None,
        power_study: None,
    }
}

/// Exit code of a finished fit set: integration failures first, then
/// non-convergence.
fn fits_code(t: &TournamentReport) -> i32 {
    let numerical = t.fits.iter().any(|f| matches!(f, Err(e) if CliError::from(e.clone()).code == EXIT_NUMERICAL));
    let unconverged = t.fits.iter().any(|f| matches!(f, Ok(r) if !r.convergence.converged));
    if numerical {
        EXIT_NUMERICAL
    } else if unconverged {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    }
}

fn run_models(command: &str, args: &ModelArgs) -> Result<i32, CliError> {
    let c = &args.common;
    check_common(c)?;
    let count = args.models.len();
    match command {
        "fit" if count != 1 => {
            return Err(CliError::usage(format!("fit takes exactly one --model, got {count}")))
        }
        "test" if count != 2 => {
            return Err(CliError::usage(format!("test takes exactly two --model, got {count}")))
        }
        "tournament" if count < 2 => {
            return Err(CliError::usage(format!("tournament needs at least two --model, got {count}")))
        }
        _ => {}
    }
    let data = read_csv(&args.data)?;
    let models: Vec<OdeModel> = args.models.iter().map(|p| read_model(p)).collect::<Result<_, _>>()?;
    for m in &models {
        data.for_model(m)
            .map_err(|e| CliError::usage(format!("model `{}` vs {}: {e}", m.name(), args.data.display())))?;
    }
    let resolved = resolve_inits(&models, &args.models, &args.inits)?;
    let inits: Vec<Vec<f64>> = models
        .iter()
        .zip(&resolved)
        .map(|(m, r)| {
            let map = r.init.iter().map(|(k, v)| (k.clone(), *v)).collect();
            m.eta_from_map(&map).expect("resolved above")
        })
        .collect();
    let fit = fit_options(c, FitOptions::default());
    let mut config = base_config(command, c);
    config.data = Some(args.data.display().to_string());
    config.models = resolved;
    config.fit = Some(fit.clone());

    if command == "fit" {
        let mut report = Report::new(&config);
        let result = crate::likelihood::fit_mle(&models[0], &data, &inits[0], &fit);
        let code = match &result {
            Ok(f) if f.convergence.converged => EXIT_OK,
            Ok(_) => EXIT_NOT_CONVERGED,
            Err(e) => CliError::from(e.clone()).code,
        };
        report.fits = vec![match &result {
            Ok(f) => FitSummary::from_fit(0, f),
            Err(e) => FitSummary::failed(0, models[0].name(), e.to_string()),
        }];
        write_report(&report, c)?;
        if let Err(e) = result {
            return Err(CliError::from(e));
        }
        return Ok(code);
    }

    let opts = TournamentOptions {
        alpha: c.alpha,
        bonferroni: c.bonferroni,
        fit,
    };
    let t = run_tournament(&models, &data, &inits, &opts).map_err(|e| CliError {
        code: EXIT_NUMERICAL,
        message: e.to_string(),
    })?;
    let report = Report::new(&config).with_tournament(&t);
    write_report(&report, c)?;
    Ok(fits_code(&t))
}

fn run_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let c = &args.common;
    check_common(c)?;
    let mut config = base_config("simulate", c);
    let sim_err = |e: crate::error::SimulationError| CliError::usage(e.to_string());
    let study = match args.study {
        StudyKind::Size => {
            let d = SizeStudyConfig::default();
            let cfg = SizeStudyConfig {
                deltas: args.grid.clone().unwrap_or(d.deltas.clone()),
                reps: args.reps.unwrap_or(d.reps),
                n: args.n.unwrap_or(d.n),
                tau: args.tau.unwrap_or(d.tau),
                alpha: c.alpha,
                seed: c.seed,
                sampling: match args.sampling {
                    Some(SamplingArg::Equispaced) => Sampling::Equispaced,
                    Some(SamplingArg::Uniform) => Sampling::Uniform,
                    None => d.sampling,
                },
                sigma: args.sigma.unwrap_or(d.sigma),
                fit: fit_options(c, d.fit.clone()),
            };
            config.size_study = Some(cfg.clone());
            size_study(&cfg).map_err(sim_err)?
        }
        StudyKind::PowerPsi5 | StudyKind::PowerN => {
            let d = PowerStudyConfig::default();
            let grid = if args.study == StudyKind::PowerPsi5 {
                PowerGrid::Psi5 {
                    values: args.grid.clone().unwrap_or(vec![0.0025, 0.05, 0.1, 0.25]),
                    n: args.n.unwrap_or(20),
                }
            } else {
                let values = match &args.grid {
                    Some(g) => g
                        .iter()
                        .map(|&v| {
                            if v >= 2.0 && v.fract() == 0.0 {
                                Ok(v as usize)
                            } else {
                                Err(CliError::usage(format!("sample sizes must be integers >= 2, got {v}")))
                            }
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                    None => (2..=11).map(|k| 10 * k).collect(),
                };
                PowerGrid::N {
                    values,
                    psi5: args.psi5.unwrap_or(0.1),
                }
            };
            let sigma_default = if args.study == StudyKind::PowerN { 0.2 } else { d.sigma };
            let cfg = PowerStudyConfig {
                grid,
                reps: args.reps.unwrap_or(d.reps),
                sigma: args.sigma.unwrap_or(sigma_default),
                tau: args.tau.unwrap_or(d.tau),
                alpha: c.alpha,
                seed: c.seed,
                fit: fit_options(c, d.fit.clone()),
            };
            config.power_study = Some(cfg.clone());
            power_study(&cfg).map_err(sim_err)?
        }
    };
    let mut report = Report::new(&config);
    report.study = Some(study);
    write_report(&report, c)?;
    Ok(EXIT_OK)
}

/// Parse `args` (including the program name) and run. Returns the exit code;
/// diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => run_models("fit", a),
        Command::Test(a) => run_models("test", a),
        Command::Tournament(a) => run_models("tournament", a),
        Command::Simulate(a) => run_simulate(a),
    };
    match outcome {
        Ok(code) => {
            if code == EXIT_NOT_CONVERGED {
                eprintln!("odesel: optimizer did not converge; best point written");
            }
            code
        }
        Err(e) => {
            eprintln!("odesel: {}", e.message);
            e.code
        }
    }
}
