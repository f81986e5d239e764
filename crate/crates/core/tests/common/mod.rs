#![allow(dead_code)]

use std::path::PathBuf;

use odesel::bundled;
use odesel::dsl::OdeModel;
use odesel::integrator::{integrate, IntegratorOptions};
use rand::Rng;

pub fn manifest_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn tight() -> IntegratorOptions {
    IntegratorOptions::with_tolerances(1e-13, 1e-15)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// A parameter point near each bundled model's declared guess, with a time
/// grid short enough to keep every model well-behaved.
pub fn bundled_cases() -> Vec<(OdeModel, Vec<f64>, Vec<f64>)> {
    bundled::ALL
        .iter()
        .map(|(stem, _)| {
            let m = bundled::load(stem).unwrap();
            let eta = m.initial_eta().unwrap();
            let t_end = if stem.starts_with("gause") { 4.0 } else { 10.0 };
            let times = (0..6).map(|i| t_end * i as f64 / 5.0).collect();
            (m, eta, times)
        })
        .collect()
}

pub fn jitter(eta: &[f64], rng: &mut impl Rng, scale: f64) -> Vec<f64> {
    eta.iter()
        .map(|v| v * (1.0 + scale * rng.random_range(-1.0..1.0)))
        .collect()
}

/// `d x_j(t_i) / d eta_k` by central differences of the plain integrator.
pub fn fd_sensitivity(m: &OdeModel, eta: &[f64], times: &[f64], k: usize) -> Vec<f64> {
    let h = 1e-6 * (1.0 + eta[k].abs());
    let mut plus = eta.to_vec();
    let mut minus = eta.to_vec();
    plus[k] += h;
    minus[k] -= h;
    let p = integrate(m, &plus, times, &tight()).unwrap();
    let q = integrate(m, &minus, times, &tight()).unwrap();
    (0..times.len())
        .flat_map(|i| (0..m.dim()).map(move |j| (i, j)))
        .map(|(i, j)| (p.state(i, j) - q.state(i, j)) / (2.0 * h))
        .collect()
}

/// `d2 x_j(t_i) / d eta_a d eta_b` by central differences with one
/// Richardson step.
pub fn fd_second(m: &OdeModel, eta: &[f64], times: &[f64], a: usize, b: usize) -> Vec<f64> {
    let coarse = fd_second_step(m, eta, times, a, b, 2e-3);
    let fine = fd_second_step(m, eta, times, a, b, 1e-3);
    fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

fn fd_second_step(m: &OdeModel, eta: &[f64], times: &[f64], a: usize, b: usize, rel: f64) -> Vec<f64> {
    let ha = rel * (0.01 + eta[a].abs());
    let hb = rel * (0.01 + eta[b].abs());
    let run = |da: f64, db: f64| {
        let mut e = eta.to_vec();
        e[a] += da;
        e[b] += db;
        integrate(m, &e, times, &tight()).unwrap()
    };
    let (d, n) = (m.dim(), times.len());
    if a == b {
        let (p, z, q) = (run(ha, 0.0), run(0.0, 0.0), run(-ha, 0.0));
        return (0..n)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (p.state(i, j) - 2.0 * z.state(i, j) + q.state(i, j)) / (ha * ha))
            .collect();
    }
    let (pp, pm, mp, mm) = (run(ha, hb), run(ha, -hb), run(-ha, hb), run(-ha, -hb));
    (0..n)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| {
            (pp.state(i, j) - pm.state(i, j) - mp.state(i, j) + mm.state(i, j)) / (4.0 * ha * hb)
        })
        .collect()
}

/// Closed-form quantities of the three-state exponential system
/// `x1 = xi1 e^{psi1 t}`, `x2 = xi2 e^{psi2 t}`, `x3 = xi3 e^{(psi1 + psi2) t}`,
/// with `theta = (s1, s2, s3, xi1, xi2, xi3, psi1, psi2)` and `s` the variances.
pub struct Golden {
    pub y: [f64; 3],
    pub t: f64,
    pub theta: [f64; 8],
}

impl Golden {
    fn parts(&self) -> ([f64; 3], [f64; 3], [f64; 3], [f64; 3]) {
        let [s1, s2, s3, x1, x2, x3, p1, p2] = self.theta;
        let t = self.t;
        let e = [(p1 * t).exp(), (p2 * t).exp(), ((p1 + p2) * t).exp()];
        let xi = [x1, x2, x3];
        let g = [
            self.y[0] - xi[0] * e[0],
            self.y[1] - xi[1] * e[1],
            self.y[2] - xi[2] * e[2],
        ];
        (e, xi, g, [s1, s2, s3])
    }

    pub fn loglik(&self) -> f64 {
        let (_, _, g, s) = self.parts();
        -0.5 * (2.0 * std::f64::consts::PI).ln() * 3.0 - 0.5 * (s[0] * s[1] * s[2]).ln()
            - (0..3).map(|j| g[j] * g[j] / (2.0 * s[j])).sum::<f64>()
    }

    pub fn score(&self) -> [f64; 8] {
        let (e, xi, g, s) = self.parts();
        let t = self.t;
        [
            -1.0 / (2.0 * s[0]) + g[0] * g[0] / (2.0 * s[0] * s[0]),
            -1.0 / (2.0 * s[1]) + g[1] * g[1] / (2.0 * s[1] * s[1]),
            -1.0 / (2.0 * s[2]) + g[2] * g[2] / (2.0 * s[2] * s[2]),
            e[0] * g[0] / s[0],
            e[1] * g[1] / s[1],
            e[2] * g[2] / s[2],
            xi[0] * t * e[0] * g[0] / s[0] + xi[2] * t * e[2] * g[2] / s[2],
            xi[1] * t * e[1] * g[1] / s[1] + xi[2] * t * e[2] * g[2] / s[2],
        ]
    }

    /// Entries transcribed block by block from the displayed Hessian.
    pub fn hessian(&self) -> [[f64; 8]; 8] {
        let (e, xi, g, s) = self.parts();
        let y = self.y;
        let t = self.t;
        let mut h = [[0.0; 8]; 8];
        for j in 0..3 {
            h[j][j] = 1.0 / (2.0 * s[j] * s[j]) - g[j] * g[j] / s[j].powi(3);
            // sigma2_j with xi_j
            h[j][3 + j] = -e[j] * g[j] / (s[j] * s[j]);
            // xi_j with xi_j
            h[3 + j][3 + j] = -e[j] * e[j] / s[j];
        }
        // sigma2 with psi
        h[0][6] = -t * xi[0] * e[0] * g[0] / (s[0] * s[0]);
        h[1][7] = -t * xi[1] * e[1] * g[1] / (s[1] * s[1]);
        h[2][6] = -t * xi[2] * e[2] * g[2] / (s[2] * s[2]);
        h[2][7] = h[2][6];
        // xi with psi
        h[3][6] = t * e[0] * (y[0] - 2.0 * xi[0] * e[0]) / s[0];
        h[4][7] = t * e[1] * (y[1] - 2.0 * xi[1] * e[1]) / s[1];
        h[5][6] = t * e[2] * (y[2] - 2.0 * xi[2] * e[2]) / s[2];
        h[5][7] = h[5][6];
        // psi with psi
        let e12 = e[2];
        h[6][6] = -t * t
            * (2.0 * s[0] * xi[2] * xi[2] * e12 * e12 - s[0] * xi[2] * y[2] * e12
                + 2.0 * s[2] * xi[0] * xi[0] * e[0] * e[0]
                - s[2] * xi[0] * y[0] * e[0])
            / (s[0] * s[2]);
        h[7][7] = -t * t
            * (2.0 * s[1] * xi[2] * xi[2] * e12 * e12 - s[1] * xi[2] * y[2] * e12
                + 2.0 * s[2] * xi[1] * xi[1] * e[1] * e[1]
                - s[2] * xi[1] * y[1] * e[1])
            / (s[1] * s[2]);
        h[6][7] = t * t * xi[2] * e12 * (y[2] - 2.0 * xi[2] * e12) / s[2];
        for a in 0..8 {
            for b in 0..a {
                h[a][b] = h[b][a];
            }
        }
        h
    }
}

pub fn random_golden(rng: &mut impl Rng) -> Golden {
    let theta: [f64; 8] = [
        rng.random_range(0.2..2.0),
        rng.random_range(0.2..2.0),
        rng.random_range(0.2..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(-0.6..0.3),
        rng.random_range(-0.6..0.3),
    ];
    let t: f64 = rng.random_range(0.1..3.0);
    let x = [
        theta[3] * (theta[6] * t).exp(),
        theta[4] * (theta[7] * t).exp(),
        theta[5] * ((theta[6] + theta[7]) * t).exp(),
    ];
    let y = [
        x[0] + rng.random_range(-1.0..1.0),
        x[1] + rng.random_range(-1.0..1.0),
        x[2] + rng.random_range(-1.0..1.0),
    ];
    Golden { y, t, theta }
}
