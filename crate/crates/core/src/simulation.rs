//! Monte Carlo size and power studies of the regularized LR test, synthetic data from
//! any model, and the KL divergence of the linear size-study models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundled;
use crate::dsl::OdeModel;
use crate::error::{FitError, SimulationError};
use crate::integrator::{integrate, IntegratorOptions};
use crate::likelihood::{fit_mle, Dataset, FitOptions};
use crate::swtest::{critical_value, sw_test, Decision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// i.i.d. uniform on `[0, tau]`, sorted.
    Uniform,
    /// `n` equally spaced points including `0` and `tau`.
    Equispaced,
}

/// A data-generating process: a model at a known `eta` plus Gaussian noise.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub model: OdeModel,
    pub eta: Vec<f64>,
    /// Noise standard deviation per state.
    pub sigma: Vec<f64>,
    pub n: usize,
    pub tau: f64,
    pub sampling: Sampling,
    pub seed: u64,
}

impl DgpSpec {
    fn validate(&self) -> Result<(), SimulationError> {
        if self.n < 2 {
            return Err(SimulationError::InvalidConfig(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SimulationError::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if self.sigma.len() != self.model.dim() || self.sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(SimulationError::InvalidConfig(
                "need one non-negative noise level per state".into(),
            ));
        }
        if self.eta.len() != self.model.eta_len() {
            return Err(SimulationError::InvalidConfig(format!(
                "model `{}` needs {} entries in eta, got {}",
                self.model.name(),
                self.model.eta_len(),
                self.eta.len()
            )));
        }
        Ok(())
    }
}

/// Generator for replication `rep` of grid cell `cell`: one ChaCha8 key per
/// study seed, one stream per (cell, replication).
pub fn replication_rng(seed: u64, cell: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

pub fn observation_times(n: usize, tau: f64, sampling: Sampling, rng: &mut impl Rng) -> Vec<f64> {
    match sampling {
        Sampling::Uniform => {
            let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=tau)).collect();
            t.sort_by(f64::total_cmp);
            t
        }
        Sampling::Equispaced => (0..n).map(|i| tau * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn simulate_with_rng(spec: &DgpSpec, rng: &mut impl Rng) -> Result<Dataset, SimulationError> {
    spec.validate()?;
    let times = observation_times(spec.n, spec.tau, spec.sampling, rng);
    let traj = integrate(&spec.model, &spec.eta, &times, &IntegratorOptions::default())?;
    let d = spec.model.dim();
    let mut obs = Vec::with_capacity(spec.n * d);
    for i in 0..spec.n {
        for j in 0..d {
            let eps: f64 = rng.sample(StandardNormal);
            obs.push(traj.state(i, j) + spec.sigma[j] * eps);
        }
    }
    Dataset::new(times, obs, spec.model.state_names().to_vec())
        .map_err(|e| SimulationError::InvalidConfig(e.to_string()))
}

/// One synthetic dataset, reproducible from `spec.seed`.
pub fn simulate_dataset(spec: &DgpSpec) -> Result<Dataset, SimulationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    simulate_with_rng(spec, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub value: f64,
    /// Replications where the test ran.
    pub replications: usize,
    /// Replications dropped because simulation or fitting failed.
    pub failures: usize,
    /// Decisions counted by this study (any rejection for size, favoring
    /// model B for power).
    pub rejections: usize,
    pub favor_a: usize,
    pub favor_b: usize,
    pub rate: f64,
    pub mc_se: f64,
}

impl StudyCell {
    fn from_outcomes(value: f64, outcomes: &[Option<Decision>], count: fn(Decision) -> bool) -> Self {
        let replications = outcomes.iter().flatten().count();
        let failures = outcomes.len() - replications;
        let favor_a = outcomes.iter().flatten().filter(|d| **d == Decision::FavorA).count();
        let favor_b = outcomes.iter().flatten().filter(|d| **d == Decision::FavorB).count();
        let rejections = outcomes.iter().flatten().filter(|d| count(**d)).count();
        let rate = if replications > 0 {
            rejections as f64 / replications as f64
        } else {
            f64::NAN
        };
        StudyCell {
            value,
            replications,
            failures,
            rejections,
            favor_a,
            favor_b,
            rate,
            mc_se: (rate * (1.0 - rate) / replications as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    /// `size` or `power`.
    pub study: String,
    /// `delta`, `psi5` or `n`.
    pub grid_name: String,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub sampling: Sampling,
    pub cells: Vec<StudyCell>,
    /// Assumptions the design had to fill in.
    pub notes: Vec<String>,
}

fn check_common(reps: usize, alpha: f64) -> Result<(), SimulationError> {
    if reps == 0 {
        return Err(SimulationError::InvalidConfig("reps must be at least 1".into()));
    }
    critical_value(alpha).map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    Ok(())
}

/// Fit both models to `data` and test them; `None` if either fit or the
/// test fails.
fn replicate(
    a: &OdeModel,
    b: &OdeModel,
    init_a: &[f64],
    init_b: &[f64],
    data: &Dataset,
    alpha: f64,
    fit: &FitOptions,
) -> Option<Decision> {
    let fa: Result<_, FitError> = fit_mle(a, data, init_a, fit);
    let fb = fit_mle(b, data, init_b, fit);
    let (fa, fb) = (fa.ok()?, fb.ok()?);
    sw_test(&fa, &fb, alpha).ok().map(|r| r.decision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeStudyConfig {
    pub deltas: Vec<f64>,
    pub reps: usize,
    pub n: usize,
    pub tau: f64,
    pub alpha: f64,
    pub seed: u64,
    pub sampling: Sampling,
    pub sigma: f64,
    pub fit: FitOptions,
}

impl Default for SizeStudyConfig {
    fn default() -> Self {
        SizeStudyConfig {
            deltas: vec![0.1, 0.3],
            reps: 200,
            n: 300,
            tau: 150.0,
            alpha: 0.05,
            seed: 0,
            sampling: Sampling::Uniform,
            sigma: 7.0,
            // the objective is quadratic in xi: one start suffices
            fit: FitOptions {
                restarts: 0,
                ..FitOptions::default()
            },
        }
    }
}

/// The two candidate models of the size study: `x' = -0.05 x + (1 -+ delta)`
/// with only the initial value free.
pub fn size_models(delta: f64) -> Result<(OdeModel, OdeModel), SimulationError> {
    let linear = bundled::load("linear").expect("bundled linear model");
    let a = linear
        .with_fixed_params(&[("psi1", -0.05), ("psi2", 1.0 - delta)])?
        .with_name("A");
    let b = linear
        .with_fixed_params(&[("psi1", -0.05), ("psi2", 1.0 + delta)])?
        .with_name("B");
    Ok((a, b))
}

/// Rejection rate of the test when both models are equally far from the
/// truth `x' = -0.05 x + 1`, `x(0) = 100`.
pub fn size_study(cfg: &SizeStudyConfig) -> Result<StudyResult, SimulationError> {
    check_common(cfg.reps, cfg.alpha)?;
    if cfg.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(SimulationError::InvalidConfig("deltas must be positive".into()));
    }
    let dgp = DgpSpec {
        model: bundled::load("linear").expect("bundled linear model"),
        eta: vec![100.0, -0.05, 1.0],
        sigma: vec![cfg.sigma],
        n: cfg.n,
        tau: cfg.tau,
        sampling: cfg.sampling,
        seed: cfg.seed,
    };
    dgp.validate()?;
    let mut cells = Vec::with_capacity(cfg.deltas.len());
    for (c, &delta) in cfg.deltas.iter().enumerate() {
        let (a, b) = size_models(delta)?;
        let outcomes: Vec<Option<Decision>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replication_rng(cfg.seed, c, rep);
                let data = simulate_with_rng(&dgp, &mut rng).ok()?;
                let fit = FitOptions {
                    seed: rng.random(),
                    ..cfg.fit.clone()
                };
                replicate(&a, &b, &[100.0], &[100.0], &data, cfg.alpha, &fit)
            })
            .collect();
        cells.push(StudyCell::from_outcomes(delta, &outcomes, |d| d != Decision::Retain));
    }
    Ok(StudyResult {
        study: "size".into(),
        grid_name: "delta".into(),
        alpha: cfg.alpha,
        reps: cfg.reps,
        seed: cfg.seed,
        sampling: cfg.sampling,
        cells,
        notes: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerGrid {
    /// Vary the logistic coefficient at a fixed number of observations.
    Psi5 { values: Vec<f64>, n: usize },
    /// Vary the number of observations at a fixed logistic coefficient.
    N { values: Vec<usize>, psi5: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerStudyConfig {
    pub grid: PowerGrid,
    pub reps: usize,
    /// Noise standard deviation, the same on both states.
    pub sigma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for PowerStudyConfig {
    fn default() -> Self {
        PowerStudyConfig {
            grid: PowerGrid::Psi5 {
                values: vec![0.0025, 0.05, 0.1, 0.25],
                n: 20,
            },
            reps: 100,
            sigma: 0.1,
            tau: 40.0,
            alpha: 0.05,
            seed: 0,
            fit: FitOptions {
                restarts: 2,
                ..FitOptions::default()
            },
        }
    }
}

/// Rate at which the test favors the logistic-prey model (B) over plain
/// Lotka-Volterra (A) when the data come from the logistic-prey model.
pub fn power_study(cfg: &PowerStudyConfig) -> Result<StudyResult, SimulationError> {
    check_common(cfg.reps, cfg.alpha)?;
    let model_a = bundled::load("gause_model1").expect("bundled model 1");
    let model_b = bundled::load("gause_model2_reparam").expect("bundled model 2");
    let cells_spec: Vec<(f64, usize, f64)> = match &cfg.grid {
        PowerGrid::Psi5 { values, n } => values.iter().map(|&v| (v, *n, v)).collect(),
        PowerGrid::N { values, psi5 } => values.iter().map(|&n| (n as f64, n, *psi5)).collect(),
    };
    let grid_name = match cfg.grid {
        PowerGrid::Psi5 { .. } => "psi5",
        PowerGrid::N { .. } => "n",
    };
    let init_a = [1.0, 2.0, 1.0, 1.0, 1.0, 1.0];
    let mut cells = Vec::with_capacity(cells_spec.len());
    for (c, &(value, n, psi5)) in cells_spec.iter().enumerate() {
        let dgp = DgpSpec {
            model: model_b.clone(),
            eta: vec![1.0, 2.0, 1.0, 1.0, 1.0, 1.0, psi5],
            sigma: vec![cfg.sigma; 2],
            n,
            tau: cfg.tau,
            sampling: Sampling::Equispaced,
            seed: cfg.seed,
        };
        dgp.validate()?;
        let outcomes: Vec<Option<Decision>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replication_rng(cfg.seed, c, rep);
                let data = simulate_with_rng(&dgp, &mut rng).ok()?;
                let fit = FitOptions {
                    seed: rng.random(),
                    ..cfg.fit.clone()
                };
                replicate(&model_a, &model_b, &init_a, &dgp.eta, &data, cfg.alpha, &fit)
            })
            .collect();
        cells.push(StudyCell::from_outcomes(value, &outcomes, |d| d == Decision::FavorB));
    }
    Ok(StudyResult {
        study: "power".into(),
        grid_name: grid_name.into(),
        alpha: cfg.alpha,
        reps: cfg.reps,
        seed: cfg.seed,
        sampling: Sampling::Equispaced,
        cells,
        notes: vec![
            "observation times equispaced on [0, tau]".into(),
            "equal noise level on both states".into(),
        ],
    })
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    err: &mut f64,
    ok: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 {
        *ok = false;
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    if delta.abs() <= 15.0 * tol {
        *err += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, err, ok)
        + adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, err, ok)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, SimulationError> {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    let mut err = 0.0;
    let mut ok = true;
    let v = adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 40, &mut err, &mut ok);
    if !ok || !v.is_finite() {
        return Err(SimulationError::Quadrature { estimate: v, error: err });
    }
    Ok(v)
}

/// KL divergence between the linear DGP and a model whose constant input
/// is shifted by `delta`, with observation times uniform on `[0, t_max]`:
/// `(1 / 2 sigma^2) (delta^2 / psi1^2) (1/T) int_0^T (1 - e^{psi1 t})^2 dt`.
pub fn kl_linear(delta: f64, sigma: f64, psi1: f64, t_max: f64) -> Result<f64, SimulationError> {
    if psi1 == 0.0 || !psi1.is_finite() {
        return Err(SimulationError::InvalidConfig("psi1 must be non-zero".into()));
    }
    if !(t_max > 0.0) || !(sigma > 0.0) {
        return Err(SimulationError::InvalidConfig("T and sigma must be positive".into()));
    }
    let f = |t: f64| (1.0 - (psi1 * t).exp()).powi(2);
    let integral = integrate_adaptive(&f, 0.0, t_max, 1e-13 * t_max)?;
    Ok(delta * delta / (2.0 * sigma * sigma * psi1 * psi1) * integral / t_max)
}
