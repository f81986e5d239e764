//! Expression trees for ODE right-hand sides.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl UnaryOp {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Exp => a.exp(),
            UnaryOp::Log => a.ln(),
            UnaryOp::Sqrt => a.sqrt(),
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
        }
    }

    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Log => Some("log"),
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
        }
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "sqrt" => Some(UnaryOp::Sqrt),
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => pow(a, b),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

/// Integer exponents go through `powi` so that negative bases stay real.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

/// A variable an expression can be differentiated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    State(usize),
    Param(usize),
}

/// Symbolic expression. State and parameter indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    State(usize),
    Param(usize),
    Time,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, a, b)
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinaryOp::Pow, a, b)
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Neg, a)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const(&self, value: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == value)
    }

    /// Plain recursive evaluation. Non-finite intermediate values propagate.
    pub fn eval(&self, state: &[f64], params: &[f64], t: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::State(i) => state[*i],
            Expr::Param(i) => params[*i],
            Expr::Time => t,
            Expr::Unary(op, a) => op.apply(a.eval(state, params, t)),
            Expr::Binary(op, a, b) => op.apply(a.eval(state, params, t), b.eval(state, params, t)),
        }
    }

    /// Largest state and parameter index referenced, plus one.
    pub fn dimensions(&self) -> (usize, usize) {
        let mut d = 0;
        let mut p = 0;
        self.visit(&mut |e| match e {
            Expr::State(i) => d = d.max(i + 1),
            Expr::Param(i) => p = p.max(i + 1),
            _ => {}
        });
        (d, p)
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    fn visit<F: FnMut(&Expr)>(&self, f: &mut F) {
        f(self);
        match self {
            Expr::Unary(_, a) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match (self, var) {
            (Expr::State(i), Var::State(j)) => *i == j,
            (Expr::Param(i), Var::Param(j)) => *i == j,
            (Expr::Unary(_, a), _) => a.depends_on(var),
            (Expr::Binary(_, a, b), _) => a.depends_on(var) || b.depends_on(var),
            _ => false,
        }
    }

    /// Replace parameters by constants (`Some(value)`) or renumber them
    /// (`None` keeps the parameter, shifted to its new index).
    pub fn substitute_params(&self, values: &[Option<f64>], new_index: &[usize]) -> Expr {
        match self {
            Expr::Param(i) => match values[*i] {
                Some(v) => Expr::Const(v),
                None => Expr::Param(new_index[*i]),
            },
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute_params(values, new_index)),
            Expr::Binary(op, a, b) => Expr::binary(
                *op,
                a.substitute_params(values, new_index),
                b.substitute_params(values, new_index),
            ),
            other => other.clone(),
        }
    }

    /// Render with the given identifier names.
    pub fn render(&self, states: &[String], params: &[String]) -> String {
        let mut out = String::new();
        self.write(&mut out, states, params, 0);
        out
    }

    fn write(&self, out: &mut String, states: &[String], params: &[String], parent: u8) {
        match self {
            Expr::Const(c) => {
                let s = format_number(*c);
                if *c < 0.0 && parent > 0 {
                    out.push('(');
                    out.push_str(&s);
                    out.push(')');
                } else {
                    out.push_str(&s);
                }
            }
            Expr::State(i) => match states.get(*i) {
                Some(name) => out.push_str(name),
                None => out.push_str(&format!("x{}", i + 1)),
            },
            Expr::Param(i) => match params.get(*i) {
                Some(name) => out.push_str(name),
                None => out.push_str(&format!("psi{}", i + 1)),
            },
            Expr::Time => out.push('t'),
            Expr::Unary(UnaryOp::Neg, a) => {
                // unary minus binds tighter than * and looser than ^
                let wrap = parent > 3;
                if wrap {
                    out.push('(');
                }
                out.push('-');
                a.write(out, states, params, 3);
                if wrap {
                    out.push(')');
                }
            }
            Expr::Unary(op, a) => {
                out.push_str(op.function_name().unwrap_or("?"));
                out.push('(');
                a.write(out, states, params, 0);
                out.push(')');
            }
            Expr::Binary(op, a, b) => {
                let prec = op.precedence();
                let wrap = prec < parent || (prec == parent && prec == 4);
                if wrap {
                    out.push('(');
                }
                let (lp, rp) = match op {
                    // right-associative
                    BinaryOp::Pow => (5, 4),
                    // left-associative; right operand of - and / needs strictly higher
                    BinaryOp::Sub | BinaryOp::Div => (prec, prec + 1),
                    _ => (prec, prec),
                };
                a.write(out, states, params, lp);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                b.write(out, states, params, rp);
                if wrap {
                    out.push(')');
                }
            }
        }
    }
}

pub(crate) fn format_number(c: f64) -> String {
    if c.is_finite() && c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else if (1e-4..1e15).contains(&c.abs()) {
        format!("{c}")
    } else {
        format!("{c:e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[], &[]))
    }
}
