use std::collections::HashMap;

use super::calculus::differentiate;
use super::expr::{Expr, Var};
use super::tape::Tape;
use crate::error::ModelError;

/// An ODE system `x' = F(x, psi, t)` with `d` states and `p` parameters.
///
/// All first and second partial derivatives of `F` in the states and the
/// parameters are built symbolically at construction time. The model is
/// immutable afterwards.
#[derive(Debug, Clone)]
pub struct OdeModel {
    name: String,
    state_names: Vec<String>,
    param_names: Vec<String>,
    rhs: Vec<Expr>,
    // [j][k] flattened as j*d + k
    dfdx: Vec<Expr>,
    // [j][a] as j*p + a
    dfdp: Vec<Expr>,
    // [j][k][l] as (j*d + k)*d + l
    d2fdx2: Vec<Expr>,
    // [j][k][a] as (j*d + k)*p + a
    d2fdxdp: Vec<Expr>,
    // [j][a][b] as (j*p + a)*p + b
    d2fdp2: Vec<Expr>,
    tapes: Tapes,
    initial_guess: HashMap<String, f64>,
}

#[derive(Debug, Clone)]
struct Tapes {
    rhs: Vec<Tape>,
    dfdx: Vec<Tape>,
    dfdp: Vec<Tape>,
    d2fdx2: Vec<Tape>,
    d2fdxdp: Vec<Tape>,
    d2fdp2: Vec<Tape>,
}

fn compile(exprs: &[Expr]) -> Vec<Tape> {
    exprs.iter().map(Tape::compile).collect()
}

impl OdeModel {
    pub fn new(
        name: impl Into<String>,
        state_names: Vec<String>,
        param_names: Vec<String>,
        rhs: Vec<Expr>,
    ) -> Result<Self, ModelError> {
        let d = state_names.len();
        let p = param_names.len();
        if d == 0 {
            return Err(ModelError::NoStates);
        }
        if rhs.len() != d {
            return Err(ModelError::MissingRhs {
                state: state_names[rhs.len().min(d - 1)].clone(),
            });
        }
        for e in &rhs {
            let (ed, ep) = e.dimensions();
            if ed > d {
                return Err(ModelError::Undeclared {
                    line: 0,
                    name: format!("state #{ed}"),
                });
            }
            if ep > p {
                return Err(ModelError::Undeclared {
                    line: 0,
                    name: format!("parameter #{ep}"),
                });
            }
        }

        let mut dfdx = Vec::with_capacity(d * d);
        let mut dfdp = Vec::with_capacity(d * p);
        let mut d2fdx2 = Vec::with_capacity(d * d * d);
        let mut d2fdxdp = Vec::with_capacity(d * d * p);
        let mut d2fdp2 = Vec::with_capacity(d * p * p);
        for f in &rhs {
            for k in 0..d {
                let fk = differentiate(f, Var::State(k));
                for l in 0..d {
                    d2fdx2.push(differentiate(&fk, Var::State(l)));
                }
                for a in 0..p {
                    d2fdxdp.push(differentiate(&fk, Var::Param(a)));
                }
                dfdx.push(fk);
            }
            for a in 0..p {
                let fa = differentiate(f, Var::Param(a));
                for b in 0..p {
                    d2fdp2.push(differentiate(&fa, Var::Param(b)));
                }
                dfdp.push(fa);
            }
        }

        let tapes = Tapes {
            rhs: compile(&rhs),
            dfdx: compile(&dfdx),
            dfdp: compile(&dfdp),
            d2fdx2: compile(&d2fdx2),
            d2fdxdp: compile(&d2fdxdp),
            d2fdp2: compile(&d2fdp2),
        };
        Ok(OdeModel {
            name: name.into(),
            state_names,
            param_names,
            rhs,
            dfdx,
            dfdp,
            d2fdx2,
            d2fdxdp,
            d2fdp2,
            tapes,
            initial_guess: HashMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Number of states `d`.
    pub fn dim(&self) -> usize {
        self.state_names.len()
    }

    /// Number of rate parameters `p`.
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    /// Length of `eta = (xi, psi)`.
    pub fn eta_len(&self) -> usize {
        self.dim() + self.n_params()
    }

    /// Length of `theta = (sigma2, xi, psi)`.
    pub fn theta_len(&self) -> usize {
        2 * self.dim() + self.n_params()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn rhs_partial_state(&self, j: usize, k: usize) -> &Expr {
        &self.dfdx[j * self.dim() + k]
    }

    pub fn rhs_partial_param(&self, j: usize, a: usize) -> &Expr {
        &self.dfdp[j * self.n_params() + a]
    }

    pub fn rhs_second_state_state(&self, j: usize, k: usize, l: usize) -> &Expr {
        let d = self.dim();
        &self.d2fdx2[(j * d + k) * d + l]
    }

    pub fn rhs_second_state_param(&self, j: usize, k: usize, a: usize) -> &Expr {
        let (d, p) = (self.dim(), self.n_params());
        &self.d2fdxdp[(j * d + k) * p + a]
    }

    pub fn rhs_second_param_param(&self, j: usize, a: usize, b: usize) -> &Expr {
        let p = self.n_params();
        &self.d2fdp2[(j * p + a) * p + b]
    }

    pub fn eval_rhs(&self, x: &[f64], psi: &[f64], t: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.tapes.rhs) {
            *o = f.eval(x, psi, t);
        }
    }

    /// `jx[j*d + k] = dF_j/dx_k`, `jp[j*p + a] = dF_j/dpsi_a`.
    pub fn eval_first(&self, x: &[f64], psi: &[f64], t: f64, jx: &mut [f64], jp: &mut [f64]) {
        for (o, f) in jx.iter_mut().zip(&self.tapes.dfdx) {
            *o = f.eval(x, psi, t);
        }
        for (o, f) in jp.iter_mut().zip(&self.tapes.dfdp) {
            *o = f.eval(x, psi, t);
        }
    }

    /// Second partials in the layouts documented on the struct fields.
    pub fn eval_second(
        &self,
        x: &[f64],
        psi: &[f64],
        t: f64,
        hxx: &mut [f64],
        hxp: &mut [f64],
        hpp: &mut [f64],
    ) {
        for (o, f) in hxx.iter_mut().zip(&self.tapes.d2fdx2) {
            *o = f.eval(x, psi, t);
        }
        for (o, f) in hxp.iter_mut().zip(&self.tapes.d2fdxdp) {
            *o = f.eval(x, psi, t);
        }
        for (o, f) in hpp.iter_mut().zip(&self.tapes.d2fdp2) {
            *o = f.eval(x, psi, t);
        }
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|s| s == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|s| s == name)
    }

    pub(crate) fn set_initial_guess(&mut self, guess: HashMap<String, f64>) {
        self.initial_guess = guess;
    }

    /// Starting guesses declared in the model file's `init:` header.
    pub fn initial_guess(&self) -> &HashMap<String, f64> {
        &self.initial_guess
    }

    /// `eta = (xi, psi)` from the declared guesses, if every entry has one.
    pub fn initial_eta(&self) -> Option<Vec<f64>> {
        self.eta_from_map(&self.initial_guess)
    }

    /// Assemble `eta` from a name → value map, or `None` if an entry is missing.
    pub fn eta_from_map(&self, values: &HashMap<String, f64>) -> Option<Vec<f64>> {
        self.state_names
            .iter()
            .chain(&self.param_names)
            .map(|n| values.get(n).copied())
            .collect()
    }

    /// Names of the `eta` entries in order: states, then parameters.
    pub fn eta_names(&self) -> Vec<String> {
        self.state_names
            .iter()
            .chain(&self.param_names)
            .cloned()
            .collect()
    }

    /// A new model with some parameters replaced by known constants.
    pub fn with_fixed_params(&self, fixed: &[(&str, f64)]) -> Result<OdeModel, ModelError> {
        let p = self.n_params();
        let mut values: Vec<Option<f64>> = vec![None; p];
        for (name, v) in fixed {
            let a = self
                .param_index(name)
                .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))?;
            values[a] = Some(*v);
        }
        let mut new_index = vec![0; p];
        let mut names = Vec::new();
        for a in 0..p {
            if values[a].is_none() {
                new_index[a] = names.len();
                names.push(self.param_names[a].clone());
            }
        }
        let rhs = self
            .rhs
            .iter()
            .map(|e| super::calculus::simplify(&e.substitute_params(&values, &new_index)))
            .collect();
        let mut model = OdeModel::new(self.name.clone(), self.state_names.clone(), names, rhs)?;
        let mut guess = self.initial_guess.clone();
        for (name, _) in fixed {
            guess.remove(*name);
        }
        model.initial_guess = guess;
        Ok(model)
    }

    /// Model file text that parses back to an equivalent model.
    pub fn render(&self) -> String {
        let mut out = format!("name: {}\nstates: {}\n", self.name, self.state_names.join(", "));
        if !self.param_names.is_empty() {
            out.push_str(&format!("params: {}\n", self.param_names.join(", ")));
        }
        let init: Vec<String> = self
            .eta_names()
            .into_iter()
            .filter_map(|n| self.initial_guess.get(&n).map(|v| format!("{n} = {}", super::expr::format_number(*v))))
            .collect();
        if !init.is_empty() {
            out.push_str(&format!("init: {}\n", init.join(", ")));
        }
        for (name, e) in self.state_names.iter().zip(&self.rhs) {
            out.push_str(&format!(
                "{name}' = {}\n",
                e.render(&self.state_names, &self.param_names)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::dsl::parse_model;

    #[test]
    fn gause_model_one_dimensions_and_rhs() {
        let m = parse_model(
            "name: m1\nstates: x1, x2\nparams: psi1, psi2, psi3, psi4\n\
             x1' = psi2 * psi3 * x1 * x2 - psi4 * x1\n\
             x2' = psi1 * x2 - psi2 * x1 * x2\n",
        )
        .unwrap();
        assert_eq!((m.dim(), m.n_params()), (2, 4));
        let (x, psi) = ([3.0, 5.0], [0.5, 0.2, 1.5, 0.7]);
        let v = m.rhs()[0].eval(&x, &psi, 0.0);
        assert!((v - (0.2 * 1.5 * 3.0 * 5.0 - 0.7 * 3.0)).abs() < 1e-14);
        // dF1/dx1 = psi2 psi3 x2 - psi4
        let d = m.rhs_partial_state(0, 0).eval(&x, &psi, 0.0);
        assert!((d - (0.2 * 1.5 * 5.0 - 0.7)).abs() < 1e-14);
    }

    #[test]
    fn fixing_parameters_renumbers_the_rest() {
        let m = parse_model("states: x\nparams: a, b, c\nx' = a * x + b - c").unwrap();
        let f = m.with_fixed_params(&[("b", 2.0)]).unwrap();
        assert_eq!(f.param_names(), &["a".to_string(), "c".to_string()]);
        let v = f.rhs()[0].eval(&[3.0], &[0.5, 1.0], 0.0);
        assert_eq!(v, 0.5 * 3.0 + 2.0 - 1.0);
        assert!(m.with_fixed_params(&[("zz", 1.0)]).is_err());
    }

    #[test]
    fn render_round_trips() {
        let src = "name: m3\nstates: x1, x2\nparams: psi1, psi2, psi3, psi4, psi5\n\
                   init: x1 = 1, psi5 = 0.01\n\
                   x1' = psi2 * psi3 * x1 * x2 / (1 + psi2 * psi5 * x1) - psi4 * x1\n\
                   x2' = psi1 * x2 - psi2 * x1 * x2 / (1 + psi2 * psi5 * x1)\n";
        let m = parse_model(src).unwrap();
        let again = parse_model(&m.render()).unwrap();
        assert_eq!(again.initial_guess(), m.initial_guess());
        let (x, psi) = ([2.0, 3.0], [0.6, 0.01, 1.4, 1.1, 0.3]);
        for j in 0..2 {
            assert_eq!(m.rhs()[j].eval(&x, &psi, 0.0), again.rhs()[j].eval(&x, &psi, 0.0));
        }
    }
}
