use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{hessian_per_obs, log_densities, sandwich_matrices, score_per_obs, Dataset, ThetaVector};
use crate::dsl::OdeModel;
use crate::error::FitError;
use crate::integrator::{integrate_with_sensitivities, integrate_with_variations, IntegratorOptions};

/// Closed interval for one entry of `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn positive() -> Self {
        Bounds {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    fn clamp(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Extra starts in addition to the initial guess.
    pub restarts: usize,
    /// Stop when `|J^T r| <= gtol * |r|^2`.
    pub gtol: f64,
    /// Stop when the step is below `xtol * (|eta| + xtol)`.
    pub xtol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// One entry per element of `eta`, or empty for no bounds.
    pub bounds: Vec<Option<Bounds>>,
    pub integrator: IntegratorOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 8,
            gtol: 1e-8,
            xtol: 1e-10,
            max_iter: 200,
            seed: 0,
            bounds: Vec::new(),
            integrator: IntegratorOptions::default(),
        }
    }
}

impl FitOptions {
    fn bound(&self, k: usize) -> Option<Bounds> {
        self.bounds.get(k).copied().flatten()
    }

    fn project(&self, eta: &mut [f64]) {
        for (k, v) in eta.iter_mut().enumerate() {
            if let Some(b) = self.bound(k) {
                *v = b.clamp(*v);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    /// LM iterations of the winning start.
    pub iterations: usize,
    /// `|J^T r|` at the optimum.
    pub gradient_norm: f64,
    /// Residual sum of squares at the optimum.
    pub objective: f64,
    pub starts: usize,
    pub failed_starts: usize,
    pub best_start: usize,
    pub integration_calls: usize,
}

/// Maximum-likelihood fit of one model with everything the test needs.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model_name: String,
    pub state_names: Vec<String>,
    pub param_names: Vec<String>,
    pub theta_hat: ThetaVector,
    pub loglik_per_obs: Vec<f64>,
    pub total_loglik: f64,
    pub scores: DMatrix<f64>,
    pub hessians: Vec<DMatrix<f64>>,
    pub h_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub convergence: Convergence,
}

impl FitResult {
    pub fn n_obs(&self) -> usize {
        self.loglik_per_obs.len()
    }

    /// Mean of the per-observation scores.
    pub fn mean_score(&self) -> DVector<f64> {
        let n = self.scores.nrows().max(1) as f64;
        self.scores.row_sum().transpose() / n
    }
}

struct Eval {
    r: DVector<f64>,
    jac: DMatrix<f64>,
    cost: f64,
}

fn evaluate(
    model: &OdeModel,
    data: &Dataset,
    eta: &[f64],
    opts: &IntegratorOptions,
    calls: &mut usize,
) -> Option<Eval> {
    *calls += 1;
    let sens = integrate_with_sensitivities(model, eta, data.times(), opts).ok()?;
    let (n, d, m) = (data.len(), model.dim(), eta.len());
    let mut r = DVector::zeros(n * d);
    let mut jac = DMatrix::zeros(n * d, m);
    for i in 0..n {
        for j in 0..d {
            let row = i * d + j;
            r[row] = data.value(i, j) - sens.base.state(i, j);
            for k in 0..m {
                jac[(row, k)] = -sens.sens(i, j, k);
            }
        }
    }
    let cost = r.norm_squared();
    if !cost.is_finite() || jac.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Eval { r, jac, cost })
}

struct StartOutcome {
    eta: Vec<f64>,
    cost: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(
    model: &OdeModel,
    data: &Dataset,
    eta0: Vec<f64>,
    opts: &FitOptions,
    calls: &mut usize,
) -> Option<StartOutcome> {
    let m = eta0.len();
    let mut eta = eta0;
    let mut cur = evaluate(model, data, &eta, &opts.integrator, calls)?;
    let scale = 1.0 + (0..data.len())
        .flat_map(|i| data.row(i).iter())
        .map(|y| y * y)
        .sum::<f64>();

    let mut grad = cur.jac.tr_mul(&cur.r);
    let mut a = cur.jac.tr_mul(&cur.jac);
    let mut lambda = 1e-3 * a.diagonal().max().max(1e-12);
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        if grad.norm() <= opts.gtol * cur.cost || cur.cost <= 1e-30 * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let mut lhs = a.clone();
        for k in 0..m {
            lhs[(k, k)] += lambda * a[(k, k)].max(1e-12);
        }
        let step = match lhs.cholesky() {
            Some(c) => c.solve(&(-&grad)),
            None => {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let mut trial: Vec<f64> = eta.iter().zip(step.iter()).map(|(e, s)| e + s).collect();
        opts.project(&mut trial);
        let delta = DVector::from_iterator(m, trial.iter().zip(&eta).map(|(t, e)| t - e));
        let eta_norm = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if delta.norm() <= opts.xtol * (eta_norm + opts.xtol) {
            converged = true;
            break;
        }

        // predicted decrease of |r|^2 under the linear model
        let predicted = -2.0 * delta.dot(&grad) - delta.dot(&(&a * &delta));
        let accepted = match evaluate(model, data, &trial, &opts.integrator, calls) {
            Some(next) if next.cost < cur.cost => {
                let rho = if predicted > 0.0 {
                    (cur.cost - next.cost) / predicted
                } else {
                    1.0
                };
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                eta = trial;
                cur = next;
                grad = cur.jac.tr_mul(&cur.r);
                a = cur.jac.tr_mul(&cur.jac);
                true
            }
            _ => false,
        };
        if !accepted {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e30 {
                break;
            }
        }
    }
    let gradient_norm = grad.norm();
    if !converged && gradient_norm <= opts.gtol * cur.cost {
        converged = true;
    }
    Some(StartOutcome {
        eta,
        cost: cur.cost,
        gradient_norm,
        iterations,
        converged,
    })
}

fn perturb(init: &[f64], opts: &FitOptions, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut eta: Vec<f64> = init
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let positive = opts.bound(k).is_some_and(|b| b.lower >= 0.0) && v > 0.0;
            if positive {
                v * rng.random_range(0.25f64.ln()..4f64.ln()).exp()
            } else {
                let width = if v != 0.0 { v.abs() } else { 1.0 };
                v + rng.random_range(-0.5..0.5) * width
            }
        })
        .collect();
    opts.project(&mut eta);
    eta
}

/// Least-squares estimate of `eta`, plug-in noise variances, and the
/// per-observation log-densities, scores and Hessians at the optimum.
///
/// `init` is `(xi, psi)`. The initial guess is tried first, followed by
/// `opts.restarts` perturbed copies; the lowest residual sum of squares wins.
pub fn fit_mle(
    model: &OdeModel,
    data: &Dataset,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let data: Cow<Dataset> = if data.names() == model.state_names() {
        Cow::Borrowed(data)
    } else {
        Cow::Owned(data.for_model(model)?)
    };
    let data = data.as_ref();
    if init.len() != model.eta_len() {
        return Err(FitError::Dimension(format!(
            "model `{}` expects {} starting values, got {}",
            model.name(),
            model.eta_len(),
            init.len()
        )));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("starting values must be finite".into()));
    }
    if !opts.bounds.is_empty() && opts.bounds.len() != init.len() {
        return Err(FitError::Dimension(format!(
            "{} bounds for {} parameters",
            opts.bounds.len(),
            init.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut calls = 0;
    let mut best: Option<(usize, StartOutcome)> = None;
    let mut failed = 0;
    for start in 0..=opts.restarts {
        let eta0 = if start == 0 {
            let mut e = init.to_vec();
            opts.project(&mut e);
            e
        } else {
            perturb(init, opts, &mut rng)
        };
        match levenberg_marquardt(model, data, eta0, opts, &mut calls) {
            Some(out) => {
                if best.as_ref().is_none_or(|(_, b)| out.cost < b.cost) {
                    best = Some((start, out));
                }
            }
            None => failed += 1,
        }
    }
    let (best_start, best) = best.ok_or(FitError::NoFeasibleStart)?;

    calls += 1;
    let var = integrate_with_variations(model, &best.eta, data.times(), &opts.integrator)?;
    let (n, d) = (data.len(), model.dim());
    let mut sigma2 = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            let g = data.value(i, j) - var.base.base.state(i, j);
            sigma2[j] += g * g / n as f64;
        }
    }
    for j in 0..d {
        let mean_sq = (0..n).map(|i| data.value(i, j).powi(2)).sum::<f64>() / n as f64;
        if sigma2[j] < 1e-12 * (1.0 + mean_sq) {
            return Err(FitError::DegenerateVariance {
                state: model.state_names()[j].clone(),
                sigma2: sigma2[j],
            });
        }
    }
    let theta_hat = ThetaVector::new(
        sigma2,
        best.eta[..d].to_vec(),
        best.eta[d..].to_vec(),
    )?;
    let loglik = log_densities(&theta_hat, data, &var.base.base)?;
    let scores = score_per_obs(&theta_hat, data, &var.base)?;
    let hessians = hessian_per_obs(&theta_hat, data, &var)?;
    let (h_hat, v_hat) = sandwich_matrices(&scores, &hessians);
    Ok(FitResult {
        model_name: model.name().to_string(),
        state_names: model.state_names().to_vec(),
        param_names: model.param_names().to_vec(),
        total_loglik: loglik.iter().sum(),
        loglik_per_obs: loglik,
        theta_hat,
        scores,
        hessians,
        h_hat,
        v_hat,
        convergence: Convergence {
            converged: best.converged,
            iterations: best.iterations,
            gradient_norm: best.gradient_norm,
            objective: best.cost,
            starts: opts.restarts + 1,
            failed_starts: failed,
            best_start,
            integration_calls: calls,
        },
    })
}
