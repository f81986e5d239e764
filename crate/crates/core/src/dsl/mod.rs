//! Model definition language: expression trees, a text format for ODE
//! systems, and symbolic differentiation of their right-hand sides.

mod calculus;
mod expr;
mod model;
mod parser;
mod tape;

pub use calculus::{differentiate, simplify};
pub use expr::{BinaryOp, Expr, UnaryOp, Var};
pub use model::OdeModel;
pub use parser::{parse_expression, parse_model};
pub use tape::Tape;
