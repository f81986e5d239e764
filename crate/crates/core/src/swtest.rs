//! A regularized likelihood-ratio test for two fitted
//! models, valid for nested, overlapping and non-nested pairs alike.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::TestError;
use crate::likelihood::FitResult;

/// Divide-by-`n` centered second moments of two log-density sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma_p2: f64,
    pub sigma_pq: f64,
    pub sigma_q2: f64,
    /// `sigma_p2 - 2 sigma_pq + sigma_q2`
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Retain,
    FavorA,
    FavorB,
}

impl Decision {
    pub fn label(self) -> &'static str {
        match self {
            Decision::Retain => "retain",
            Decision::FavorA => "favor A",
            Decision::FavorB => "favor B",
        }
    }
}

/// Intermediate quantities of the bandwidth rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HDiagnostics {
    pub z: f64,
    pub delta_hat: f64,
    pub c_sd: f64,
    pub c_pl: f64,
    /// `tr(H^-1 V)` for each model; `None` if that Hessian was unusable.
    pub trace_a: Option<f64>,
    pub trace_b: Option<f64>,
    pub pseudo_inverse_a: bool,
    pub pseudo_inverse_b: bool,
    /// `C_SD` was zero or non-finite and a unit ratio was used.
    pub c_sd_fallback: bool,
    /// `C_PL` was zero or non-finite and a unit ratio was used.
    pub c_pl_fallback: bool,
    /// The ratio was negative before taking its absolute value.
    pub negative_ratio: bool,
}

impl HDiagnostics {
    pub fn any_fallback(&self) -> bool {
        self.c_sd_fallback || self.c_pl_fallback
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwTestResult {
    pub model_a: String,
    pub model_b: String,
    pub n: usize,
    pub lr_tilde: f64,
    pub h_n: f64,
    pub sigma_tilde2: f64,
    pub t_stat: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub decision: Decision,
    pub variance: VarianceComponents,
    pub diagnostics: HDiagnostics,
}

fn check_pair(logp: &[f64], logq: &[f64], needed: usize) -> Result<(), TestError> {
    if logp.len() != logq.len() {
        return Err(TestError::LengthMismatch(logp.len(), logq.len()));
    }
    if logp.len() < needed {
        return Err(TestError::TooFewObservations {
            needed,
            got: logp.len(),
        });
    }
    Ok(())
}

pub fn variance_components(logp: &[f64], logq: &[f64]) -> Result<VarianceComponents, TestError> {
    check_pair(logp, logq, 2)?;
    let n = logp.len() as f64;
    let mp = logp.iter().sum::<f64>() / n;
    let mq = logq.iter().sum::<f64>() / n;
    let (mut pp, mut pq, mut qq) = (0.0, 0.0, 0.0);
    for (p, q) in logp.iter().zip(logq) {
        let (a, b) = (p - mp, q - mq);
        pp += a * a;
        pq += a * b;
        qq += b * b;
    }
    let (sigma_p2, sigma_pq, sigma_q2) = (pp / n, pq / n, qq / n);
    Ok(VarianceComponents {
        sigma_p2,
        sigma_pq,
        sigma_q2,
        sigma2: sigma_p2 - 2.0 * sigma_pq + sigma_q2,
    })
}

/// `(1/n) sum_i (w_i log p_i - w_{i+1} log q_i)` with `w_k = 1` for odd `k`
/// and `1 + h` for even `k` (one-based).
pub fn reweighted_lr(logp: &[f64], logq: &[f64], h: f64) -> Result<f64, TestError> {
    check_pair(logp, logq, 1)?;
    if !(h >= 0.0) {
        return Err(TestError::InvalidH(h));
    }
    let weight = |k: usize| if k % 2 == 0 { 1.0 + h } else { 1.0 };
    let n = logp.len();
    let sum: f64 = (1..=n)
        .map(|i| weight(i) * logp[i - 1] - weight(i + 1) * logq[i - 1])
        .sum();
    Ok(sum / n as f64)
}

/// `(1 + h) sigma2 + (h^2 / 2)(sigma_p2 + sigma_q2)`.
pub fn regularized_variance(vc: &VarianceComponents, h: f64) -> Result<f64, TestError> {
    if !(h >= 0.0) {
        return Err(TestError::InvalidH(h));
    }
    let v = (1.0 + h) * vc.sigma2 + 0.5 * h * h * (vc.sigma_p2 + vc.sigma_q2);
    if !(v > 0.0) {
        return Err(TestError::DegenerateVariance(v));
    }
    Ok(v)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Upper `1 - alpha/2` quantile of the standard normal.
pub fn critical_value(alpha: f64) -> Result<f64, TestError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TestError::InvalidAlpha(alpha));
    }
    Ok(standard_normal().inverse_cdf(1.0 - alpha / 2.0))
}

pub fn decide(t_stat: f64, alpha: f64) -> Result<Decision, TestError> {
    let z = critical_value(alpha)?;
    Ok(if t_stat > z {
        Decision::FavorA
    } else if t_stat < -z {
        Decision::FavorB
    } else {
        Decision::Retain
    })
}

/// `tr(H^-1 V)` through a symmetric eigendecomposition of `H`. Returns the
/// trace and whether a pseudo-inverse had to be used, or `None` if `H` is
/// zero or not finite.
pub fn trace_hinv_v(h: &DMatrix<f64>, v: &DMatrix<f64>) -> Option<(f64, bool)> {
    if h.iter().chain(v.iter()).any(|x| !x.is_finite()) || h.nrows() != v.nrows() {
        return None;
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let norm = eig.eigenvalues.amax();
    if norm == 0.0 {
        return None;
    }
    let smallest = eig.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    let pseudo = !(norm / smallest <= 1e12);
    let cutoff = 1e-10 * norm;
    let mut trace = 0.0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if pseudo && lambda.abs() <= cutoff {
            continue;
        }
        let q = eig.eigenvectors.column(k);
        trace += (q.transpose() * v * q)[(0, 0)] / lambda;
    }
    Some((trace, pseudo))
}

/// Data-driven regularization parameter from the sandwich matrices of
/// both models.
pub fn optimal_h_from_matrices(
    vc: &VarianceComponents,
    a: (&DMatrix<f64>, &DMatrix<f64>),
    b: (&DMatrix<f64>, &DMatrix<f64>),
    alpha: f64,
    n: usize,
) -> Result<(f64, HDiagnostics), TestError> {
    if n < 3 {
        return Err(TestError::TooFewObservations { needed: 3, got: n });
    }
    let z = critical_value(alpha)?;
    let sum = vc.sigma_p2 + vc.sigma_q2;
    if !(sum > 0.0) {
        return Err(TestError::ZeroVarianceSum);
    }
    let ta = trace_hinv_v(a.0, a.1);
    let tb = trace_hinv_v(b.0, b.1);
    let max_trace = match (ta, tb) {
        (None, None) => return Err(TestError::SingularHessian('A')),
        (Some((x, _)), None) | (None, Some((x, _))) => x.abs(),
        (Some((x, _)), Some((y, _))) => x.abs().max(y.abs()),
    };

    let phi = standard_normal();
    let sigma = vc.sigma2.max(0.0).sqrt();
    let delta_hat = 0.5 * sigma * (z - (4.0 + z * z).sqrt());
    let c_sd = if sigma > 0.0 {
        phi.pdf(z - delta_hat / sigma) * delta_hat * (sigma * sigma - 2.0 * sum)
            / (4.0 * sigma.powi(3))
    } else {
        0.0
    };
    let c_pl = 2.0 * phi.pdf(z) * max_trace / (sum / 2.0).sqrt();

    let c_sd_fallback = !(c_sd != 0.0 && c_sd.is_finite());
    let c_pl_fallback = !(c_pl != 0.0 && c_pl.is_finite());
    let ratio = if c_sd_fallback || c_pl_fallback {
        1.0
    } else {
        c_sd / c_pl
    };
    let nf = n as f64;
    let h = ratio.abs().cbrt() * nf.powf(-1.0 / 6.0) * nf.ln().ln().cbrt();
    Ok((
        h,
        HDiagnostics {
            z,
            delta_hat,
            c_sd,
            c_pl,
            trace_a: ta.map(|t| t.0),
            trace_b: tb.map(|t| t.0),
            pseudo_inverse_a: ta.is_some_and(|t| t.1),
            pseudo_inverse_b: tb.is_some_and(|t| t.1),
            c_sd_fallback,
            c_pl_fallback,
            negative_ratio: ratio < 0.0,
        },
    ))
}

pub fn optimal_h(
    vc: &VarianceComponents,
    fit_a: &FitResult,
    fit_b: &FitResult,
    alpha: f64,
    n: usize,
) -> Result<(f64, HDiagnostics), TestError> {
    optimal_h_from_matrices(
        vc,
        (&fit_a.h_hat, &fit_a.v_hat),
        (&fit_b.h_hat, &fit_b.v_hat),
        alpha,
        n,
    )
}

/// `sqrt(n) * LR~ / sigma~`.
pub fn sw_statistic(
    logp: &[f64],
    logq: &[f64],
    vc: &VarianceComponents,
    h: f64,
) -> Result<f64, TestError> {
    let lr = reweighted_lr(logp, logq, h)?;
    let var = regularized_variance(vc, h)?;
    Ok((logp.len() as f64).sqrt() * lr / var.sqrt())
}

/// Full test from per-observation log-densities and sandwich matrices.
pub fn sw_test_from_parts(
    logp: &[f64],
    logq: &[f64],
    a: (&DMatrix<f64>, &DMatrix<f64>),
    b: (&DMatrix<f64>, &DMatrix<f64>),
    alpha: f64,
) -> Result<SwTestResult, TestError> {
    let vc = variance_components(logp, logq)?;
    let n = logp.len();
    let (h, diagnostics) = optimal_h_from_matrices(&vc, a, b, alpha, n)?;
    let lr_tilde = reweighted_lr(logp, logq, h)?;
    let sigma_tilde2 = regularized_variance(&vc, h)?;
    let t_stat = (n as f64).sqrt() * lr_tilde / sigma_tilde2.sqrt();
    Ok(SwTestResult {
        model_a: "A".into(),
        model_b: "B".into(),
        n,
        lr_tilde,
        h_n: h,
        sigma_tilde2,
        t_stat,
        alpha,
        critical_value: diagnostics.z,
        decision: decide(t_stat, alpha)?,
        variance: vc,
        diagnostics,
    })
}

/// Compare two models fitted to the same data. A positive statistic
/// favors `fit_a`.
pub fn sw_test(fit_a: &FitResult, fit_b: &FitResult, alpha: f64) -> Result<SwTestResult, TestError> {
    let mut out = sw_test_from_parts(
        &fit_a.loglik_per_obs,
        &fit_b.loglik_per_obs,
        (&fit_a.h_hat, &fit_a.v_hat),
        (&fit_b.h_hat, &fit_b.v_hat),
        alpha,
    )?;
    out.model_a = fit_a.model_name.clone();
    out.model_b = fit_b.model_name.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_sequences_have_zero_lr_variance() {
        let lp = [0.3, -1.2, 4.0, 2.2];
        let vc = variance_components(&lp, &lp).unwrap();
        assert!(vc.sigma2.abs() < 1e-15);
    }

    #[test]
    fn two_point_components() {
        let vc = variance_components(&[0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!((vc.sigma_p2, vc.sigma_pq, vc.sigma_q2, vc.sigma2), (1.0, 0.0, 0.0, 1.0));
        let vc = variance_components(&[3.0, 3.0, 3.0], &[1.0, 2.0, 0.0]).unwrap();
        assert_eq!(vc.sigma_p2, 0.0);
        assert!(variance_components(&[1.0], &[1.0]).is_err());
        assert!(variance_components(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn reweighted_lr_examples() {
        let (p, q) = ([0.5, -1.0, 2.0], [1.0, 0.25, -3.0]);
        let plain = (0.5 - 1.0 + (-1.0 - 0.25) + (2.0 + 3.0)) / 3.0;
        assert!((reweighted_lr(&p, &q, 0.0).unwrap() - plain).abs() < 1e-15);
        assert_eq!(reweighted_lr(&[1.0, 1.0], &[0.0, 0.0], 0.5).unwrap(), 1.25);
        let (a, b, h) = ([0.7, -0.2], [1.1, 0.4], 0.3);
        let expected = 0.5 * (a[0] - (1.0 + h) * b[0] + (1.0 + h) * a[1] - b[1]);
        assert!((reweighted_lr(&a, &b, h).unwrap() - expected).abs() < 1e-15);
        assert!(reweighted_lr(&a, &b, -0.1).is_err());
    }

    #[test]
    fn reweighted_lr_four_points() {
        let (p, q) = ([1.0, 2.0, 1.0, 2.0], [0.0, 1.0, 0.0, 1.0]);
        let w = [1.0, 1.1, 1.0, 1.1, 1.0];
        let mut sum = 0.0;
        for i in 0..4 {
            sum += w[i] * p[i] - w[i + 1] * q[i];
        }
        let lr = reweighted_lr(&p, &q, 0.1).unwrap();
        assert!((lr - sum / 4.0).abs() < 1e-15);
        assert!((lr - 1.1).abs() < 1e-12);
    }

    #[test]
    fn regularized_variance_examples() {
        let vc = VarianceComponents { sigma_p2: 2.0, sigma_pq: 2.0, sigma_q2: 3.0, sigma2: 1.0 };
        assert_eq!(regularized_variance(&vc, 0.0).unwrap(), 1.0);
        assert!((regularized_variance(&vc, 0.5).unwrap() - 2.125).abs() < 1e-15);
        let nested = VarianceComponents { sigma_p2: 1.0, sigma_pq: 1.0, sigma_q2: 1.0, sigma2: 0.0 };
        assert!((regularized_variance(&nested, 0.1).unwrap() - 0.01).abs() < 1e-15);
        let flat = VarianceComponents { sigma_p2: 0.0, sigma_pq: 0.0, sigma_q2: 0.0, sigma2: 0.0 };
        assert!(matches!(regularized_variance(&flat, 0.5), Err(TestError::DegenerateVariance(_))));
    }

    #[test]
    fn constant_log_densities_are_degenerate() {
        let vc = variance_components(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(sw_statistic(&[1.0, 1.0], &[0.0, 0.0], &vc, 0.5).is_err());
    }

    #[test]
    fn quantiles_and_decisions() {
        assert!((critical_value(0.05).unwrap() - 1.959963984540054).abs() < 1e-9);
        assert!((critical_value(0.05 / 6.0).unwrap() - 2.638257273).abs() < 1e-6);
        assert_eq!(decide(-0.359, 0.05).unwrap(), Decision::Retain);
        assert_eq!(decide(-4.433, 0.05).unwrap(), Decision::FavorB);
        assert_eq!(decide(0.987, 0.05).unwrap(), Decision::Retain);
        assert_eq!(decide(5.802, 0.05).unwrap(), Decision::FavorA);
        let z = critical_value(0.05).unwrap();
        assert_eq!(decide(z, 0.05).unwrap(), Decision::Retain);
        assert_eq!(decide(-z, 0.05).unwrap(), Decision::Retain);
        assert!(decide(0.0, 0.0).is_err());
        assert!(decide(0.0, 1.0).is_err());
    }

    #[test]
    fn delta_hat_for_unit_sigma() {
        let vc = VarianceComponents { sigma_p2: 1.0, sigma_pq: 0.5, sigma_q2: 1.0, sigma2: 1.0 };
        let id = DMatrix::<f64>::identity(2, 2);
        let (_, diag) = optimal_h_from_matrices(&vc, (&id, &id), (&id, &id), 0.05, 100).unwrap();
        // 0.5 * (1.959964 - sqrt(7.841459))
        assert!((diag.delta_hat + 0.4201483).abs() < 1e-6, "{}", diag.delta_hat);
    }

    #[test]
    fn zero_sigma_falls_back_to_unit_ratio() {
        let vc = VarianceComponents { sigma_p2: 1.0, sigma_pq: 1.0, sigma_q2: 1.0, sigma2: 0.0 };
        let id = DMatrix::<f64>::identity(2, 2);
        let (h, diag) = optimal_h_from_matrices(&vc, (&id, &id), (&id, &id), 0.05, 50).unwrap();
        assert!(diag.c_sd_fallback);
        let expected = 50f64.powf(-1.0 / 6.0) * 50f64.ln().ln().cbrt();
        assert!((h - expected).abs() < 1e-15);
    }

    #[test]
    fn h_scales_with_n() {
        let vc = VarianceComponents { sigma_p2: 2.0, sigma_pq: 0.3, sigma_q2: 1.5, sigma2: 2.9 };
        let ha = DMatrix::from_row_slice(2, 2, &[-2.0, 0.3, 0.3, -1.0]);
        let va = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
        let (h1, _) = optimal_h_from_matrices(&vc, (&ha, &va), (&ha, &va), 0.05, 64).unwrap();
        let (h2, _) = optimal_h_from_matrices(&vc, (&ha, &va), (&ha, &va), 0.05, 4096).unwrap();
        let expected = 0.5 * (4096f64.ln().ln() / 64f64.ln().ln()).cbrt();
        assert!((h2 / h1 - expected).abs() < 1e-12);
        assert!((h2 / h1 - 0.570614).abs() < 1e-6);
    }

    #[test]
    fn trace_of_singular_hessian_uses_pseudo_inverse() {
        let h = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 0.0]);
        let v = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (tr, pseudo) = trace_hinv_v(&h, &v).unwrap();
        assert!(pseudo);
        assert!((tr + 2.0).abs() < 1e-12);
        let h = DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 0.5, -1.0]);
        let (tr, pseudo) = trace_hinv_v(&h, &v).unwrap();
        let direct = (h.clone().try_inverse().unwrap() * &v).trace();
        assert!(!pseudo);
        assert!((tr - direct).abs() < 1e-12);
        assert!(trace_hinv_v(&DMatrix::zeros(2, 2), &v).is_none());
    }

    #[test]
    fn same_model_twice_gives_finite_statistic() {
        let lp = [-1.0, -2.5, -0.3, -1.7, -0.9];
        let id = DMatrix::<f64>::identity(3, 3);
        let r = sw_test_from_parts(&lp, &lp, (&id, &id), (&id, &id), 0.05).unwrap();
        assert!(r.t_stat.is_finite());
        assert!(r.diagnostics.c_sd_fallback);
        assert!((r.sigma_tilde2 - r.h_n * r.h_n * r.variance.sigma_p2).abs() < 1e-14);
    }
}
