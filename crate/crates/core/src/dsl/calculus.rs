//! Symbolic differentiation and local simplification.

use super::expr::{BinaryOp, Expr, UnaryOp, Var};

/// Exact partial derivative of `e` with respect to `var`, simplified.
///
/// `a ^ b` with a non-constant exponent is differentiated as
/// `exp(b * log(a))`, so the result is only meaningful where `a > 0`.
pub fn differentiate(e: &Expr, var: Var) -> Expr {
    simplify(&diff(e, var))
}

fn diff(e: &Expr, var: Var) -> Expr {
    if !e.depends_on(var) {
        return Expr::Const(0.0);
    }
    match e {
        Expr::Const(_) | Expr::Time => Expr::Const(0.0),
        Expr::State(_) | Expr::Param(_) => Expr::Const(1.0),
        Expr::Unary(op, a) => {
            let da = diff(a, var);
            let a = (**a).clone();
            match op {
                UnaryOp::Neg => Expr::neg(da),
                UnaryOp::Exp => Expr::mul(Expr::unary(UnaryOp::Exp, a), da),
                UnaryOp::Log => Expr::div(da, a),
                UnaryOp::Sqrt => Expr::div(
                    da,
                    Expr::mul(Expr::Const(2.0), Expr::unary(UnaryOp::Sqrt, a)),
                ),
                UnaryOp::Sin => Expr::mul(Expr::unary(UnaryOp::Cos, a), da),
                UnaryOp::Cos => Expr::neg(Expr::mul(Expr::unary(UnaryOp::Sin, a), da)),
            }
        }
        Expr::Binary(op, a, b) => {
            let (a, b) = (&**a, &**b);
            match op {
                BinaryOp::Add => Expr::add(diff(a, var), diff(b, var)),
                BinaryOp::Sub => Expr::sub(diff(a, var), diff(b, var)),
                BinaryOp::Mul => Expr::add(
                    Expr::mul(diff(a, var), b.clone()),
                    Expr::mul(a.clone(), diff(b, var)),
                ),
                BinaryOp::Div => Expr::div(
                    Expr::sub(
                        Expr::mul(diff(a, var), b.clone()),
                        Expr::mul(a.clone(), diff(b, var)),
                    ),
                    Expr::pow(b.clone(), Expr::Const(2.0)),
                ),
                BinaryOp::Pow => match b.as_const() {
                    Some(c) => Expr::mul(
                        Expr::mul(
                            Expr::Const(c),
                            Expr::pow(a.clone(), Expr::Const(c - 1.0)),
                        ),
                        diff(a, var),
                    ),
                    None => {
                        let as_exp = Expr::unary(
                            UnaryOp::Exp,
                            Expr::mul(b.clone(), Expr::unary(UnaryOp::Log, a.clone())),
                        );
                        diff(&as_exp, var)
                    }
                },
            }
        }
    }
}

/// Constant folding plus the identities `0+e`, `e+0`, `e-0`, `0*e`, `1*e`,
/// `e/1`, `e^1`, `e^0`, `--e`, applied bottom-up until nothing changes.
pub fn simplify(e: &Expr) -> Expr {
    let mut current = e.clone();
    loop {
        let next = simplify_once(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn simplify_once(e: &Expr) -> Expr {
    match e {
        Expr::Unary(op, a) => {
            let a = simplify_once(a);
            if let Some(c) = a.as_const() {
                let v = op.apply(c);
                if v.is_finite() {
                    return Expr::Const(v);
                }
            }
            if *op == UnaryOp::Neg {
                if let Expr::Unary(UnaryOp::Neg, inner) = a {
                    return *inner;
                }
            }
            Expr::unary(*op, a)
        }
        Expr::Binary(op, a, b) => {
            let a = simplify_once(a);
            let b = simplify_once(b);
            if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
                let v = op.apply(x, y);
                if v.is_finite() {
                    return Expr::Const(v);
                }
            }
            match op {
                BinaryOp::Add => {
                    if a.is_const(0.0) {
                        return b;
                    }
                    if b.is_const(0.0) {
                        return a;
                    }
                }
                BinaryOp::Sub => {
                    if b.is_const(0.0) {
                        return a;
                    }
                    if a.is_const(0.0) {
                        return Expr::neg(b);
                    }
                }
                BinaryOp::Mul => {
                    if a.is_const(0.0) || b.is_const(0.0) {
                        return Expr::Const(0.0);
                    }
                    if a.is_const(1.0) {
                        return b;
                    }
                    if b.is_const(1.0) {
                        return a;
                    }
                    if a.is_const(-1.0) {
                        return Expr::neg(b);
                    }
                    if b.is_const(-1.0) {
                        return Expr::neg(a);
                    }
                    // c1 * (c2 * e) -> (c1*c2) * e
                    if let Some(c1) = a.as_const() {
                        if let Expr::Binary(BinaryOp::Mul, ref l, ref r) = b {
                            if let Some(c2) = l.as_const() {
                                return Expr::mul(Expr::Const(c1 * c2), (**r).clone());
                            }
                        }
                    }
                    // (c1 * e) * c2 and (e * c2) -> c * e
                    if let Some(c2) = b.as_const() {
                        if let Expr::Binary(BinaryOp::Mul, ref l, ref r) = a {
                            if let Some(c1) = l.as_const() {
                                return Expr::mul(Expr::Const(c1 * c2), (**r).clone());
                            }
                        }
                        return Expr::mul(b, a);
                    }
                }
                BinaryOp::Div => {
                    if b.is_const(1.0) {
                        return a;
                    }
                }
                BinaryOp::Pow => {
                    if b.is_const(1.0) {
                        return a;
                    }
                    if b.is_const(0.0) {
                        return Expr::Const(1.0);
                    }
                }
            }
            Expr::binary(*op, a, b)
        }
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_expression;

    fn parse(src: &str) -> Expr {
        let states = ["x1", "x2"];
        let params = ["psi1", "psi2", "psi3"];
        parse_expression(src, &states, &params).unwrap()
    }

    #[test]
    fn product_with_constant_factor() {
        let d = differentiate(&parse("psi1 * x1"), Var::Param(0));
        assert_eq!(d, Expr::State(0));
    }

    #[test]
    fn bilinear_mixed_partial_is_one() {
        let e = parse("psi1 * x1");
        let d = differentiate(&differentiate(&e, Var::Param(0)), Var::State(0));
        assert_eq!(d, Expr::Const(1.0));
    }

    #[test]
    fn simplify_identities() {
        assert_eq!(simplify(&parse("0 * x1 + psi1")), Expr::Param(0));
        assert_eq!(simplify(&parse("(1 * x1) ^ 1")), Expr::State(0));
        assert_eq!(
            simplify(&parse("2 * 3 * x1")),
            Expr::mul(Expr::Const(6.0), Expr::State(0))
        );
        assert_eq!(simplify(&parse("x1 - 0")), Expr::State(0));
    }

    #[test]
    fn derivative_of_independent_expression_is_zero() {
        assert_eq!(differentiate(&parse("exp(x2) * psi2"), Var::State(0)), Expr::Const(0.0));
    }

    #[test]
    fn general_power_rule() {
        let e = parse("x1 ^ psi1");
        let d = differentiate(&e, Var::Param(0));
        let (x, p) = (2.0_f64, 1.5_f64);
        let expected = x.powf(p) * x.ln();
        assert!((d.eval(&[x, 0.0], &[p, 0.0, 0.0], 0.0) - expected).abs() < 1e-12);
        let d = differentiate(&e, Var::State(0));
        let expected = p * x.powf(p - 1.0);
        assert!((d.eval(&[x, 0.0], &[p, 0.0, 0.0], 0.0) - expected).abs() < 1e-12);
    }
}
