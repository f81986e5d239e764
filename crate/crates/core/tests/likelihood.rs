mod common;

use common::{bundled_cases, jitter, random_golden, rel_err, tight};
use nalgebra::{DMatrix, SymmetricEigen};
use odesel::bundled;
use odesel::dsl::OdeModel;
use odesel::integrator::{integrate, integrate_with_sensitivities, integrate_with_variations};
use odesel::likelihood::{
    fit_mle, gaussian_loglik, hessian_per_obs, sandwich_matrices, score_per_obs, Dataset, FitOptions,
    ThetaVector,
};
use odesel::simulation::{simulate_dataset, size_models, DgpSpec, Sampling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs() + 1e-12
}

#[test]
fn three_state_exponential_matches_closed_form() {
    let m = bundled::load("exponential3").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let g = random_golden(&mut rng);
        let th = g.theta;
        let theta = ThetaVector::new(th[..3].to_vec(), th[3..6].to_vec(), th[6..].to_vec()).unwrap();
        let times = vec![0.5 * g.t, g.t];
        let mut obs = g.y.to_vec();
        obs.extend_from_slice(&g.y);
        let data = Dataset::new(times.clone(), obs, m.state_names().to_vec()).unwrap();

        let var = integrate_with_variations(&m, &theta.eta(), &times, &tight()).unwrap();
        let lp = gaussian_loglik(&m, &theta, &data, &tight()).unwrap();
        let scores = score_per_obs(&theta, &data, &var.base).unwrap();
        let hess = hessian_per_obs(&theta, &data, &var).unwrap();

        assert!(close(lp[1], g.loglik(), 1e-10), "{} vs {}", lp[1], g.loglik());
        let s = g.score();
        for a in 0..8 {
            assert!(close(scores[(1, a)], s[a], 1e-8), "score {a}: {} vs {}", scores[(1, a)], s[a]);
        }
        let h = g.hessian();
        for a in 0..8 {
            for b in 0..8 {
                assert!(
                    close(hess[1][(a, b)], h[a][b], 1e-8),
                    "hessian ({a},{b}): {} vs {}",
                    hess[1][(a, b)],
                    h[a][b]
                );
            }
        }
    }
}

/// Observations around the model trajectory with a per-state noise level of
/// one tenth of the typical state magnitude.
fn noisy_data(m: &OdeModel, eta: &[f64], times: &[f64], rng: &mut impl Rng) -> (Dataset, Vec<f64>) {
    let traj = integrate(m, eta, times, &tight()).unwrap();
    let d = m.dim();
    let scale: Vec<f64> = (0..d)
        .map(|j| 0.1 * (1.0 + (0..times.len()).map(|i| traj.state(i, j).abs()).sum::<f64>() / times.len() as f64))
        .collect();
    let mut obs = Vec::new();
    for i in 0..times.len() {
        for j in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            obs.push(traj.state(i, j) + scale[j] * e);
        }
    }
    let sigma2 = scale.iter().map(|s| s * s * rng.random_range(0.5..2.0)).collect();
    (Dataset::new(times.to_vec(), obs, m.state_names().to_vec()).unwrap(), sigma2)
}

fn total_loglik(m: &OdeModel, flat: &[f64], data: &Dataset) -> f64 {
    let theta = ThetaVector::from_flat(m.dim(), flat).unwrap();
    gaussian_loglik(m, &theta, data, &tight()).unwrap().iter().sum()
}

fn total_score(m: &OdeModel, flat: &[f64], data: &Dataset) -> Vec<f64> {
    let theta = ThetaVector::from_flat(m.dim(), flat).unwrap();
    let sens = integrate_with_sensitivities(m, &theta.eta(), data.times(), &tight()).unwrap();
    let s = score_per_obs(&theta, data, &sens).unwrap();
    s.row_sum().iter().copied().collect()
}

fn check_against_differences(m: &OdeModel, eta: &[f64], times: &[f64], rng: &mut impl Rng) {
    let (data, sigma2) = noisy_data(m, eta, times, rng);
    let theta = ThetaVector::new(sigma2, eta[..m.dim()].to_vec(), eta[m.dim()..].to_vec()).unwrap();
    let flat = theta.to_flat();
    let q = flat.len();
    let var = integrate_with_variations(m, eta, times, &tight()).unwrap();
    let scores = score_per_obs(&theta, &data, &var.base).unwrap();
    let hessians = hessian_per_obs(&theta, &data, &var).unwrap();
    let score = scores.row_sum();
    let mut hess = DMatrix::zeros(q, q);
    for h in &hessians {
        hess += h;
    }
    for a in 0..q {
        let h = 1e-6 * (1.0 + flat[a].abs());
        let mut p = flat.clone();
        let mut n = flat.clone();
        p[a] += h;
        n[a] -= h;
        let fd = (total_loglik(m, &p, &data) - total_loglik(m, &n, &data)) / (2.0 * h);
        assert!(rel_err(score[a], fd) < 1e-4, "{} score {a}: {} vs {fd}", m.name(), score[a]);

        let sp = total_score(m, &p, &data);
        let sn = total_score(m, &n, &data);
        for b in 0..q {
            let fd = (sp[b] - sn[b]) / (2.0 * h);
            assert!(
                rel_err(hess[(b, a)], fd) < 1e-3,
                "{} hessian ({b},{a}): {} vs {fd}",
                m.name(),
                hess[(b, a)]
            );
        }
    }
}

#[test]
fn score_and_hessian_match_differences_on_bundled_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (m, eta, times) in bundled_cases() {
        check_against_differences(&m, &eta, &times, &mut rng);
    }
}

#[test]
fn score_and_hessian_match_differences_for_lotka_volterra() {
    let m = bundled::load("gause_model1").unwrap();
    let eta0 = m.initial_eta().unwrap();
    let times: Vec<f64> = (0..8).map(|i| 0.5 * i as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..5 {
        let eta = jitter(&eta0, &mut rng, 0.1);
        check_against_differences(&m, &eta, &times, &mut rng);
    }
}

#[test]
fn sandwich_matrices_are_symmetric_and_v_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for (m, eta, times) in bundled_cases() {
        let (data, sigma2) = noisy_data(&m, &eta, &times, &mut rng);
        let theta = ThetaVector::new(sigma2, eta[..m.dim()].to_vec(), eta[m.dim()..].to_vec()).unwrap();
        let var = integrate_with_variations(&m, &eta, &times, &tight()).unwrap();
        let scores = score_per_obs(&theta, &data, &var.base).unwrap();
        let hessians = hessian_per_obs(&theta, &data, &var).unwrap();
        let (h, v) = sandwich_matrices(&scores, &hessians);
        let q = h.nrows();
        for a in 0..q {
            for b in 0..q {
                assert!((h[(a, b)] - h[(b, a)]).abs() <= 1e-10 * (1.0 + h[(a, b)].abs()));
                assert!((v[(a, b)] - v[(b, a)]).abs() <= 1e-10 * (1.0 + v[(a, b)].abs()));
            }
        }
        let eig = SymmetricEigen::new(v.clone());
        let trace = v.trace();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * trace), "{}", m.name());
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while (b - a).abs() > 1e-12 * (1.0 + a.abs()) {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

#[test]
fn initial_value_fit_matches_golden_section_search() {
    for seed in 0..5 {
        let spec = DgpSpec {
            model: bundled::load("linear").unwrap(),
            eta: vec![100.0, -0.05, 1.0],
            sigma: vec![7.0],
            n: 300,
            tau: 150.0,
            sampling: Sampling::Uniform,
            seed,
        };
        let data = simulate_dataset(&spec).unwrap();
        for delta in [0.1, 0.3] {
            let (a, _) = size_models(delta).unwrap();
            let fit = fit_mle(&a, &data, &[100.0], &FitOptions { restarts: 0, ..Default::default() }).unwrap();
            let c = (1.0 - delta) / 0.05;
            let sse = |xi: f64| -> f64 {
                (0..data.len())
                    .map(|i| {
                        let x = c + (xi - c) * (-0.05 * data.times()[i]).exp();
                        (data.value(i, 0) - x).powi(2)
                    })
                    .sum()
            };
            let xi = golden_section(sse, 0.0, 200.0);
            assert!(
                (fit.theta_hat.xi[0] - xi).abs() < 1e-6 * xi.abs(),
                "{} vs {xi}",
                fit.theta_hat.xi[0]
            );
            let s2 = sse(xi) / data.len() as f64;
            assert!((fit.theta_hat.sigma2[0] - s2).abs() < 1e-6 * s2);
        }
    }
}

#[test]
fn mean_score_vanishes_at_a_one_state_optimum() {
    let m = bundled::load("linear").unwrap();
    for seed in 0..3 {
        let spec = DgpSpec {
            model: m.clone(),
            eta: vec![100.0, -0.05, 1.0],
            sigma: vec![3.0],
            n: 60,
            tau: 150.0,
            sampling: Sampling::Uniform,
            seed,
        };
        let data = simulate_dataset(&spec).unwrap();
        let fit = fit_mle(&m, &data, &[90.0, -0.04, 1.2], &FitOptions::default()).unwrap();
        assert!(fit.convergence.converged);
        let s = fit.mean_score();
        let scale = (fit.v_hat.diagonal().iter().map(|v| v.sqrt()).fold(0.0, f64::max)).max(1.0);
        assert!(s.amax() < 1e-5 * scale, "mean score {s}");
    }
}

#[test]
fn total_loglik_is_the_sum_of_observation_terms() {
    let m = bundled::load("exponential").unwrap();
    let data = odesel::cli::read_csv(&common::manifest_path("data/synthetic_yield.csv")).unwrap();
    let data = data.for_model(&m).unwrap();
    let fit = fit_mle(&m, &data, &m.initial_eta().unwrap(), &FitOptions::default()).unwrap();
    let sum: f64 = fit.loglik_per_obs.iter().sum();
    assert!((fit.total_loglik - sum).abs() <= 1e-12 * sum.abs());
    assert_eq!(fit.scores.nrows(), data.len());
    assert_eq!(fit.hessians.len(), data.len());
}
