//! Postfix compilation of expressions for fast repeated evaluation.

use super::expr::{BinaryOp, Expr, UnaryOp};

const STACK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    State(usize),
    Param(usize),
    Time,
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// An expression flattened to postfix order. Evaluates to the same value
/// as [`Expr::eval`], bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    // expressions too deep for the fixed stack fall back to the tree
    tree: Option<Expr>,
}

impl Tape {
    pub fn compile(e: &Expr) -> Tape {
        let mut ops = Vec::with_capacity(e.node_count());
        let depth = emit(e, &mut ops);
        if depth > STACK {
            return Tape {
                ops: Vec::new(),
                tree: Some(e.clone()),
            };
        }
        Tape { ops, tree: None }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], p: &[f64], t: f64) -> f64 {
        if let Some(e) = &self.tree {
            return e.eval(x, p, t);
        }
        if let [Op::Const(c)] = self.ops.as_slice() {
            return *c;
        }
        let mut stack = [0.0f64; STACK];
        let mut top = 0;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[top] = c;
                    top += 1;
                }
                Op::State(i) => {
                    stack[top] = x[i];
                    top += 1;
                }
                Op::Param(i) => {
                    stack[top] = p[i];
                    top += 1;
                }
                Op::Time => {
                    stack[top] = t;
                    top += 1;
                }
                Op::Unary(u) => stack[top - 1] = u.apply(stack[top - 1]),
                Op::Binary(b) => {
                    top -= 1;
                    stack[top - 1] = b.apply(stack[top - 1], stack[top]);
                }
            }
        }
        stack[0]
    }
}

// returns the stack depth needed
fn emit(e: &Expr, ops: &mut Vec<Op>) -> usize {
    match e {
        Expr::Const(c) => {
            ops.push(Op::Const(*c));
            1
        }
        Expr::State(i) => {
            ops.push(Op::State(*i));
            1
        }
        Expr::Param(i) => {
            ops.push(Op::Param(*i));
            1
        }
        Expr::Time => {
            ops.push(Op::Time);
            1
        }
        Expr::Unary(u, a) => {
            let d = emit(a, ops);
            ops.push(Op::Unary(*u));
            d
        }
        Expr::Binary(b, l, r) => {
            let dl = emit(l, ops);
            let dr = emit(r, ops);
            ops.push(Op::Binary(*b));
            dl.max(dr + 1)
        }
    }
}
