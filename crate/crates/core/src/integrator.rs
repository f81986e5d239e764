//! Explicit Dormand-Prince 5(4) integration of an [`OdeModel`], optionally
//! augmented with its first (sensitivity) and second (variational)
//! derivatives with respect to `eta = (xi, psi)`.
//!
//! The state, sensitivities and variations are integrated as one flattened
//! system so they share a single adaptive step sequence. Observation times
//! are hit exactly by shortening the step; there is no dense output.
//!
//! Layout of the augmented vector for a model with `d` states and
//! `m = d + p` entries in `eta`:
//!
//! ```text
//! [ x_j                         j < d
//! | s_{j,k} = dx_j/deta_k       at d + j*m + k
//! | z_{j,a,b} = d2x_j/deta_a deta_b   at d + d*m + (j*m + a)*m + b ]
//! ```

use serde::{Deserialize, Serialize};

use crate::dsl::OdeModel;
use crate::error::IntegrationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
    /// Smallest accepted step; `1e-12 * (t_last - t_0)` when `None`.
    pub min_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 1_000_000,
            initial_step: None,
            min_step: None,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorOptions {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), IntegrationError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(IntegrationError::InvalidInput(format!(
                "tolerances must be positive (rel_tol = {}, abs_tol = {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_steps == 0 {
            return Err(IntegrationError::InvalidInput("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Solution `x(t_i; eta)` at the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    dim: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `x_j(t_i)`.
    pub fn state(&self, i: usize, j: usize) -> f64 {
        self.states[i * self.dim + j]
    }

    /// All states at `t_i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }
}

/// Trajectory plus first derivatives `s_{ijk} = dx_j(t_i)/deta_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    pub base: Trajectory,
    n_eta: usize,
    sens: Vec<f64>,
}

impl SensitivityTrajectory {
    pub fn n_eta(&self) -> usize {
        self.n_eta
    }

    pub fn sens(&self, i: usize, j: usize, k: usize) -> f64 {
        let (d, m) = (self.base.dim, self.n_eta);
        self.sens[(i * d + j) * m + k]
    }

    /// The `d x m` block at `t_i`, row-major in the state index.
    pub fn block(&self, i: usize) -> &[f64] {
        let dm = self.base.dim * self.n_eta;
        &self.sens[i * dm..(i + 1) * dm]
    }
}

/// Trajectory with first and second derivatives with respect to `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalTrajectory {
    pub base: SensitivityTrajectory,
    var2: Vec<f64>,
}

impl VariationalTrajectory {
    /// `d2 x_j(t_i) / deta_a deta_b`.
    pub fn var2(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        let (d, m) = (self.base.base.dim, self.base.n_eta);
        self.var2[((i * d + j) * m + a) * m + b]
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let (d, m) = (self.base.base.dim, self.base.n_eta);
        let len = d * m * m;
        &self.var2[i * len..(i + 1) * len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Order {
    State,
    First,
    Second,
}

/// Right-hand side of the (possibly augmented) system.
struct Augmented<'a> {
    model: &'a OdeModel,
    psi: &'a [f64],
    order: Order,
    d: usize,
    p: usize,
    m: usize,
    jx: Vec<f64>,
    jp: Vec<f64>,
    hxx: Vec<f64>,
    hxp: Vec<f64>,
    hpp: Vec<f64>,
    // t_{j,l,b} = sum_q hxx[j,l,q] s[q,b] + hx_eta[j,l,b]
    tmp: Vec<f64>,
}

impl<'a> Augmented<'a> {
    fn new(model: &'a OdeModel, psi: &'a [f64], order: Order) -> Self {
        let d = model.dim();
        let p = model.n_params();
        let m = d + p;
        let (first, second) = match order {
            Order::State => (false, false),
            Order::First => (true, false),
            Order::Second => (true, true),
        };
        let sized = |on: bool, n: usize| if on { vec![0.0; n] } else { Vec::new() };
        Augmented {
            model,
            psi,
            order,
            d,
            p,
            m,
            jx: sized(first, d * d),
            jp: sized(first, d * p),
            hxx: sized(second, d * d * d),
            hxp: sized(second, d * d * p),
            hpp: sized(second, d * p * p),
            tmp: sized(second, d * d * m),
        }
    }

    fn dim(&self) -> usize {
        let (d, m) = (self.d, self.m);
        match self.order {
            Order::State => d,
            Order::First => d + d * m,
            Order::Second => d + d * m + d * m * m,
        }
    }

    fn initial(&self, xi: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        y[..self.d].copy_from_slice(xi);
        if self.order >= Order::First {
            for j in 0..self.d {
                y[self.d + j * self.m + j] = 1.0;
            }
        }
        y
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        let (d, p, m) = (self.d, self.p, self.m);
        let x = &y[..d];
        self.model.eval_rhs(x, self.psi, t, &mut dy[..d]);
        if self.order == Order::State {
            return;
        }
        self.model.eval_first(x, self.psi, t, &mut self.jx, &mut self.jp);
        let s = &y[d..d + d * m];
        {
            let ds = &mut dy[d..d + d * m];
            for j in 0..d {
                for k in 0..m {
                    let mut acc = if k >= d { self.jp[j * p + k - d] } else { 0.0 };
                    for l in 0..d {
                        acc += self.jx[j * d + l] * s[l * m + k];
                    }
                    ds[j * m + k] = acc;
                }
            }
        }
        if self.order == Order::First {
            return;
        }

        self.model
            .eval_second(x, self.psi, t, &mut self.hxx, &mut self.hxp, &mut self.hpp);
        let hx_eta = |hxp: &[f64], j: usize, l: usize, b: usize| {
            if b >= d {
                hxp[(j * d + l) * p + b - d]
            } else {
                0.0
            }
        };
        for j in 0..d {
            for l in 0..d {
                for b in 0..m {
                    let mut acc = hx_eta(&self.hxp, j, l, b);
                    for q in 0..d {
                        acc += self.hxx[(j * d + l) * d + q] * s[q * m + b];
                    }
                    self.tmp[(j * d + l) * m + b] = acc;
                }
            }
        }
        let off = d + d * m;
        let (zs, dzs) = (&y[off..], &mut dy[off..]);
        for j in 0..d {
            for a in 0..m {
                for b in a..m {
                    let mut acc = if a >= d && b >= d {
                        self.hpp[(j * p + a - d) * p + b - d]
                    } else {
                        0.0
                    };
                    for l in 0..d {
                        acc += self.jx[j * d + l] * zs[(l * m + a) * m + b];
                        acc += self.tmp[(j * d + l) * m + b] * s[l * m + a];
                        acc += hx_eta(&self.hxp, j, l, a) * s[l * m + b];
                    }
                    dzs[(j * m + a) * m + b] = acc;
                    dzs[(j * m + b) * m + a] = acc;
                }
            }
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI step-size controller constants.
const BETA: f64 = 0.04;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], opts: &IntegratorOptions) -> f64 {
    let mut sum = 0.0;
    for i in 0..y.len() {
        let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
        let r = err[i] / sc;
        sum += r * r;
    }
    (sum / y.len() as f64).sqrt()
}

fn initial_step(
    sys: &mut Augmented,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    opts: &IntegratorOptions,
    span: f64,
) -> f64 {
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 || !d2.is_finite() {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrate from `t = 0`, returning the augmented state at each time.
fn solve(
    sys: &mut Augmented,
    xi: &[f64],
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<f64>, IntegrationError> {
    opts.validate()?;
    let n_out = sys.dim();
    if xi.len() != sys.d {
        return Err(IntegrationError::InvalidInput(format!(
            "expected {} initial values, got {}",
            sys.d,
            xi.len()
        )));
    }
    if xi.iter().chain(sys.psi).any(|v| !v.is_finite()) {
        return Err(IntegrationError::InvalidInput("eta must be finite".into()));
    }
    if let Some(&t0) = times.first() {
        if !(t0 >= 0.0) {
            return Err(IntegrationError::InvalidInput(format!(
                "observation times must be non-negative, got {t0}"
            )));
        }
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(IntegrationError::InvalidInput(
            "observation times must be finite and sorted ascending".into(),
        ));
    }

    let mut out = Vec::with_capacity(times.len() * n_out);
    let mut y = sys.initial(xi);
    let t_end = times.last().copied().unwrap_or(0.0);
    if t_end == 0.0 {
        for _ in times {
            out.extend_from_slice(&y);
        }
        return Ok(out);
    }
    let min_step = opts.min_step.unwrap_or(1e-12 * t_end);

    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut t = 0.0_f64;
    sys.rhs(t, &y, &mut k1);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFinite { t });
    }
    let mut h = match opts.initial_step {
        Some(h) if h > 0.0 => h.min(t_end),
        _ => initial_step(sys, t, &y, &k1, opts, t_end),
    };
    let mut fac_old = 1e-4_f64;
    let mut steps = 0usize;
    let mut last_reject_nonfinite = false;

    for &target in times {
        while t < target {
            if steps >= opts.max_steps {
                return Err(IntegrationError::MaxSteps {
                    t,
                    max_steps: opts.max_steps,
                });
            }
            if h < min_step {
                return Err(if last_reject_nonfinite {
                    IntegrationError::NonFinite { t }
                } else {
                    IntegrationError::StepUnderflow { t }
                });
            }
            // clamp onto the next observation time; stretch slightly to
            // avoid a tiny trailing step
            let remaining = target - t;
            let (h_step, hits) = if h >= remaining * (1.0 - 1e-10) || t + h >= target {
                (remaining, true)
            } else {
                (h, false)
            };
            steps += 1;

            for i in 0..n {
                ytmp[i] = y[i] + h_step * A21 * k1[i];
            }
            sys.rhs(t + C2 * h_step, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h_step * (A31 * k1[i] + A32 * k2[i]);
            }
            sys.rhs(t + C3 * h_step, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h_step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.rhs(t + C4 * h_step, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] =
                    y[i] + h_step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.rhs(t + C5 * h_step, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h_step
                        * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if hits { target } else { t + h_step };
            sys.rhs(t_new, &ytmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i]
                    + h_step
                        * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.rhs(t_new, &ynew, &mut k7);
            for i in 0..n {
                err[i] = h_step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
            }

            let finite = ynew.iter().chain(&k7).all(|v| v.is_finite());
            let err_norm = if finite {
                error_norm(&y, &ynew, &err, opts)
            } else {
                f64::INFINITY
            };

            if err_norm <= 1.0 {
                let fac11 = err_norm.powf(0.2 - BETA * 0.75);
                let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let h_next = h_step / fac;
                fac_old = err_norm.max(1e-4);
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                t = t_new;
                // a clamped step must not shrink the proposal for the next one
                h = if hits { h_next.max(h) } else { h_next };
                last_reject_nonfinite = false;
            } else if finite {
                let fac11 = err_norm.powf(0.2 - BETA * 0.75);
                h = h_step / (fac11 / SAFETY).min(1.0 / FAC_MIN);
                last_reject_nonfinite = false;
            } else {
                h = h_step * 0.25;
                last_reject_nonfinite = true;
            }
        }
        out.extend_from_slice(&y);
    }
    Ok(out)
}

fn split_eta<'a>(model: &OdeModel, eta: &'a [f64]) -> Result<(&'a [f64], &'a [f64]), IntegrationError> {
    if eta.len() != model.eta_len() {
        return Err(IntegrationError::InvalidInput(format!(
            "model `{}` expects {} entries in eta, got {}",
            model.name(),
            model.eta_len(),
            eta.len()
        )));
    }
    Ok(eta.split_at(model.dim()))
}

/// Solve `x' = F(x, psi, t)`, `x(0) = xi` and report `x` at `times`.
pub fn integrate(
    model: &OdeModel,
    eta: &[f64],
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory, IntegrationError> {
    let (xi, psi) = split_eta(model, eta)?;
    let mut sys = Augmented::new(model, psi, Order::State);
    let states = solve(&mut sys, xi, times, opts)?;
    Ok(Trajectory {
        times: times.to_vec(),
        dim: model.dim(),
        states,
    })
}

fn unpack(
    model: &OdeModel,
    times: &[f64],
    raw: Vec<f64>,
    order: Order,
) -> (Trajectory, Vec<f64>, Vec<f64>) {
    let d = model.dim();
    let m = model.eta_len();
    let stride = match order {
        Order::State => d,
        Order::First => d + d * m,
        Order::Second => d + d * m + d * m * m,
    };
    let n = times.len();
    let mut states = Vec::with_capacity(n * d);
    let mut sens = Vec::with_capacity(n * d * m);
    let mut var2 = Vec::new();
    for i in 0..n {
        let row = &raw[i * stride..(i + 1) * stride];
        states.extend_from_slice(&row[..d]);
        sens.extend_from_slice(&row[d..d + d * m]);
        if order == Order::Second {
            var2.extend_from_slice(&row[d + d * m..]);
        }
    }
    (
        Trajectory {
            times: times.to_vec(),
            dim: d,
            states,
        },
        sens,
        var2,
    )
}

/// Solve the state jointly with the sensitivity equations
/// `s' = (dF/dx) s + dF/deta`, `s(0) = (I, 0)`.
pub fn integrate_with_sensitivities(
    model: &OdeModel,
    eta: &[f64],
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<SensitivityTrajectory, IntegrationError> {
    let (xi, psi) = split_eta(model, eta)?;
    let mut sys = Augmented::new(model, psi, Order::First);
    let raw = solve(&mut sys, xi, times, opts)?;
    let (base, sens, _) = unpack(model, times, raw, Order::First);
    Ok(SensitivityTrajectory {
        base,
        n_eta: model.eta_len(),
        sens,
    })
}

/// Solve state, sensitivities and the second-order variational equations
/// jointly, `z(0) = 0`.
pub fn integrate_with_variations(
    model: &OdeModel,
    eta: &[f64],
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<VariationalTrajectory, IntegrationError> {
    let (xi, psi) = split_eta(model, eta)?;
    let mut sys = Augmented::new(model, psi, Order::Second);
    let raw = solve(&mut sys, xi, times, opts)?;
    let (base, sens, var2) = unpack(model, times, raw, Order::Second);
    Ok(VariationalTrajectory {
        base: SensitivityTrajectory {
            base,
            n_eta: model.eta_len(),
            sens,
        },
        var2,
    })
}
