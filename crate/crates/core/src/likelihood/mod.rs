//! Gaussian log-likelihood of an ODE model, its per-observation score and
//! Hessian in `theta = (sigma2, xi, psi)`, and maximum-likelihood fitting.

mod dataset;
mod fit;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dataset::Dataset;
pub use fit::{fit_mle, Bounds, Convergence, FitOptions, FitResult};

use crate::dsl::OdeModel;
use crate::error::FitError;
use crate::integrator::{
    integrate, IntegratorOptions, SensitivityTrajectory, Trajectory, VariationalTrajectory,
};

/// `theta = (sigma2, xi, psi)`: per-state noise variances, initial values
/// and rate parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub sigma2: Vec<f64>,
    pub xi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ThetaVector {
    pub fn new(sigma2: Vec<f64>, xi: Vec<f64>, psi: Vec<f64>) -> Result<Self, FitError> {
        if sigma2.len() != xi.len() {
            return Err(FitError::Dimension(format!(
                "{} variances for {} states",
                sigma2.len(),
                xi.len()
            )));
        }
        if sigma2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(FitError::InvalidInput("noise variances must be positive".into()));
        }
        Ok(ThetaVector { sigma2, xi, psi })
    }

    /// Split a flat `(sigma2, xi, psi)` vector with `d` states.
    pub fn from_flat(d: usize, flat: &[f64]) -> Result<Self, FitError> {
        if flat.len() < 2 * d {
            return Err(FitError::Dimension(format!(
                "theta of length {} is too short for {d} states",
                flat.len()
            )));
        }
        ThetaVector::new(
            flat[..d].to_vec(),
            flat[d..2 * d].to_vec(),
            flat[2 * d..].to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn len(&self) -> usize {
        self.sigma2.len() + self.xi.len() + self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `eta = (xi, psi)`.
    pub fn eta(&self) -> Vec<f64> {
        self.xi.iter().chain(&self.psi).copied().collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.sigma2
            .iter()
            .chain(&self.xi)
            .chain(&self.psi)
            .copied()
            .collect()
    }

    fn check(&self, model: &OdeModel, data: &Dataset) -> Result<(), FitError> {
        if self.dim() != model.dim() || self.psi.len() != model.n_params() {
            return Err(FitError::Dimension(format!(
                "theta has {} states and {} parameters, model `{}` has {} and {}",
                self.dim(),
                self.psi.len(),
                model.name(),
                model.dim(),
                model.n_params()
            )));
        }
        check_data(self, data)
    }
}

fn check_data(theta: &ThetaVector, data: &Dataset) -> Result<(), FitError> {
    if data.dim() != theta.dim() {
        return Err(FitError::Dimension(format!(
            "data has {} columns, theta has {} states",
            data.dim(),
            theta.dim()
        )));
    }
    Ok(())
}

fn check_len(data: &Dataset, n: usize) -> Result<(), FitError> {
    if data.len() != n {
        return Err(FitError::Dimension(format!(
            "trajectory has {n} times, data has {}",
            data.len()
        )));
    }
    Ok(())
}

/// `log p_i` for every observation, integrating the model at `theta`.
pub fn gaussian_loglik(
    model: &OdeModel,
    theta: &ThetaVector,
    data: &Dataset,
    opts: &IntegratorOptions,
) -> Result<Vec<f64>, FitError> {
    theta.check(model, data)?;
    let traj = integrate(model, &theta.eta(), data.times(), opts)?;
    log_densities(theta, data, &traj)
}

/// `log p_i` from an already integrated trajectory.
pub fn log_densities(
    theta: &ThetaVector,
    data: &Dataset,
    traj: &Trajectory,
) -> Result<Vec<f64>, FitError> {
    check_data(theta, data)?;
    check_len(data, traj.len())?;
    let d = theta.dim();
    let constant = -0.5 * d as f64 * (2.0 * PI).ln()
        - 0.5 * theta.sigma2.iter().map(|s| s.ln()).sum::<f64>();
    Ok((0..data.len())
        .map(|i| {
            let mut lp = constant;
            for j in 0..d {
                let g = data.value(i, j) - traj.state(i, j);
                lp -= g * g / (2.0 * theta.sigma2[j]);
            }
            lp
        })
        .collect())
}

/// Row `i` is the gradient of `log p_i` in `theta`.
pub fn score_per_obs(
    theta: &ThetaVector,
    data: &Dataset,
    sens: &SensitivityTrajectory,
) -> Result<DMatrix<f64>, FitError> {
    check_data(theta, data)?;
    check_len(data, sens.base.len())?;
    let d = theta.dim();
    let m = sens.n_eta();
    let mut out = DMatrix::zeros(data.len(), d + m);
    for i in 0..data.len() {
        for j in 0..d {
            let s2 = theta.sigma2[j];
            let g = data.value(i, j) - sens.base.state(i, j);
            out[(i, j)] = 0.5 * (g * g / s2 - 1.0) / s2;
            for k in 0..m {
                out[(i, d + k)] += sens.sens(i, j, k) * g / s2;
            }
        }
    }
    Ok(out)
}

/// The Hessian of `log p_i` in `theta` for every observation.
pub fn hessian_per_obs(
    theta: &ThetaVector,
    data: &Dataset,
    var: &VariationalTrajectory,
) -> Result<Vec<DMatrix<f64>>, FitError> {
    check_data(theta, data)?;
    let sens = &var.base;
    check_len(data, sens.base.len())?;
    let d = theta.dim();
    let m = sens.n_eta();
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let mut h = DMatrix::zeros(d + m, d + m);
        for j in 0..d {
            let s2 = theta.sigma2[j];
            let g = data.value(i, j) - sens.base.state(i, j);
            h[(j, j)] = 0.5 / (s2 * s2) - g * g / (s2 * s2 * s2);
            for k in 0..m {
                let c = -sens.sens(i, j, k) * g / (s2 * s2);
                h[(j, d + k)] = c;
                h[(d + k, j)] = c;
            }
            for a in 0..m {
                let sa = sens.sens(i, j, a);
                for b in a..m {
                    let v = (var.var2(i, j, a, b) * g - sa * sens.sens(i, j, b)) / s2;
                    h[(d + a, d + b)] += v;
                    if b != a {
                        h[(d + b, d + a)] += v;
                    }
                }
            }
        }
        out.push(h);
    }
    Ok(out)
}

/// `H = mean of the Hessians`, `V = mean of score outer products`.
pub fn sandwich_matrices(
    scores: &DMatrix<f64>,
    hessians: &[DMatrix<f64>],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = scores.nrows();
    let q = scores.ncols();
    let mut h = DMatrix::zeros(q, q);
    for hi in hessians {
        h += hi;
    }
    if !hessians.is_empty() {
        h /= hessians.len() as f64;
    }
    let mut v = scores.transpose() * scores;
    if n > 0 {
        v /= n as f64;
    }
    (h, v)
}
