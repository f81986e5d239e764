//! Line-oriented model files.
//!
//! ```text
//! name: lotka_volterra
//! states: x1, x2
//! params: psi1, psi2, psi3, psi4
//! init: x1 = 100, x2 = 120, psi1 = 0.6   # optional starting guesses
//! x1' = psi2 * psi3 * x1 * x2 - psi4 * x1
//! x2' = psi1 * x2 - psi2 * x1 * x2
//! ```
//!
//! Precedence from tightest: `^` (right-associative), unary minus, `*` `/`,
//! `+` `-`. `t` is the time variable.

use std::collections::HashMap;

use super::expr::{BinaryOp, Expr, UnaryOp};
use super::model::OdeModel;
use crate::error::ModelError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Op(char),
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn tokenize(src: &str, line: usize, col0: usize) -> Result<Vec<Token>, ModelError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = col0 + i;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                column,
            });
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| ModelError::Syntax {
                line,
                column,
                message: format!("invalid number `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(value),
                column,
            });
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ModelError::Syntax {
                        line,
                        column,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push(Token { tok, column });
            i += 1;
        }
    }
    out.push(Token {
        tok: Tok::End,
        column: col0 + chars.len(),
    });
    Ok(out)
}

struct ExprParser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
    states: &'a HashMap<String, usize>,
    params: &'a HashMap<String, usize>,
    undeclared: Option<String>,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ModelError {
        let tok = &self.tokens[self.pos];
        let message = if tok.tok == Tok::End {
            format!("{} at end of input", message.into())
        } else {
            message.into()
        };
        ModelError::Syntax {
            line: self.line,
            column: tok.column,
            message,
        }
    }

    fn parse_sum(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.parse_product()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_product(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ModelError> {
        match self.peek() {
            Tok::Op('-') => {
                self.advance();
                Ok(Expr::neg(self.parse_unary()?))
            }
            Tok::Op('+') => {
                self.advance();
                self.parse_unary()
            }
            _ => self.parse_power(),
        }
    }

    fn parse_power(&mut self) -> Result<Expr, ModelError> {
        let base = self.parse_primary()?;
        if let Tok::Op('^') = self.peek() {
            self.advance();
            // right-associative; the exponent may carry its own sign
            let exponent = self.parse_unary()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Expr, ModelError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.advance();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.advance();
                let e = self.parse_sum()?;
                match self.peek() {
                    Tok::RParen => {
                        self.advance();
                        Ok(e)
                    }
                    _ => Err(self.error("expected `)`")),
                }
            }
            Tok::Ident(name) => {
                self.advance();
                if let Some(op) = UnaryOp::from_function_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.error(format!("expected `(` after `{name}`")));
                    }
                    self.advance();
                    let arg = self.parse_sum()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.error("expected `)`"));
                    }
                    self.advance();
                    return Ok(Expr::unary(op, arg));
                }
                if name == "t" {
                    return Ok(Expr::Time);
                }
                if let Some(&i) = self.states.get(&name) {
                    return Ok(Expr::State(i));
                }
                if let Some(&i) = self.params.get(&name) {
                    return Ok(Expr::Param(i));
                }
                if self.undeclared.is_none() {
                    self.undeclared = Some(name);
                }
                Ok(Expr::Const(f64::NAN))
            }
            Tok::End => Err(self.error("expected an operand")),
            Tok::Op(c) => Err(self.error(format!("unexpected operator `{c}`"))),
            Tok::RParen => Err(self.error("unexpected `)`")),
        }
    }
}

fn parse_expr_line(
    src: &str,
    line: usize,
    col0: usize,
    states: &HashMap<String, usize>,
    params: &HashMap<String, usize>,
) -> Result<Expr, ModelError> {
    let tokens = tokenize(src, line, col0)?;
    let mut parser = ExprParser {
        tokens,
        pos: 0,
        line,
        states,
        params,
        undeclared: None,
    };
    let e = parser.parse_sum()?;
    if *parser.peek() != Tok::End {
        return Err(parser.error("unexpected trailing input"));
    }
    if let Some(name) = parser.undeclared {
        return Err(ModelError::Undeclared { line, name });
    }
    Ok(e)
}

/// Parse a single expression against the given identifier lists.
pub fn parse_expression(src: &str, states: &[&str], params: &[&str]) -> Result<Expr, ModelError> {
    let s = index_map(states.iter().map(|s| s.to_string()));
    let p = index_map(params.iter().map(|s| s.to_string()));
    parse_expr_line(src, 1, 1, &s, &p)
}

fn index_map(names: impl Iterator<Item = String>) -> HashMap<String, usize> {
    names.enumerate().map(|(i, n)| (n, i)).collect()
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_reserved(s: &str) -> bool {
    s == "t" || UnaryOp::from_function_name(s).is_some()
}

fn parse_name_list(
    body: &str,
    line: usize,
    col0: usize,
    seen: &mut HashMap<String, usize>,
) -> Result<Vec<String>, ModelError> {
    let mut names = Vec::new();
    if body.trim().is_empty() {
        return Ok(names);
    }
    let mut offset = 0;
    for part in body.split(',') {
        let name = part.trim();
        let column = col0 + offset + part.find(name).unwrap_or(0);
        offset += part.len() + 1;
        if !is_identifier(name) || is_reserved(name) {
            return Err(ModelError::Syntax {
                line,
                column,
                message: format!("`{name}` is not a valid identifier"),
            });
        }
        if seen.insert(name.to_string(), line).is_some() {
            return Err(ModelError::DuplicateName {
                line,
                name: name.to_string(),
            });
        }
        names.push(name.to_string());
    }
    Ok(names)
}

/// Parse a model file. See the module docs for the grammar.
pub fn parse_model(text: &str) -> Result<OdeModel, ModelError> {
    let mut name = String::from("model");
    let mut states: Vec<String> = Vec::new();
    let mut params: Vec<String> = Vec::new();
    let mut seen = HashMap::new();
    let mut init_line: Option<(usize, usize, String)> = None;
    let mut rhs_lines: Vec<(usize, String, usize, String)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let trimmed = content.trim();

        if let Some(eq) = trimmed.find('=') {
            let lhs = trimmed[..eq].trim_end();
            if let Some(state) = lhs.strip_suffix('\'') {
                let state = state.trim().to_string();
                let col = indent + eq + 2;
                rhs_lines.push((line, state, col, trimmed[eq + 1..].to_string()));
                continue;
            }
        }

        let Some(colon) = trimmed.find(':') else {
            return Err(ModelError::Syntax {
                line,
                column: indent + 1,
                message: "expected a header (`name:`, `states:`, `params:`, `init:`) or `<state>' = <expression>`".into(),
            });
        };
        let key = trimmed[..colon].trim();
        let body = &trimmed[colon + 1..];
        let body_col = indent + colon + 2;
        match key {
            "name" => {
                let value = body.trim();
                if !is_identifier(value) {
                    return Err(ModelError::Syntax {
                        line,
                        column: body_col,
                        message: format!("`{value}` is not a valid model name"),
                    });
                }
                name = value.to_string();
            }
            "states" => states.extend(parse_name_list(body, line, body_col, &mut seen)?),
            "params" => params.extend(parse_name_list(body, line, body_col, &mut seen)?),
            "init" => init_line = Some((line, body_col, body.to_string())),
            other => {
                return Err(ModelError::Syntax {
                    line,
                    column: indent + 1,
                    message: format!("unknown header `{other}`"),
                })
            }
        }
    }

    let state_idx = index_map(states.iter().cloned());
    let param_idx = index_map(params.iter().cloned());

    let mut rhs: Vec<Option<Expr>> = vec![None; states.len()];
    for (line, state, col, src) in rhs_lines {
        let expr = parse_expr_line(&src, line, col, &state_idx, &param_idx)?;
        let Some(&j) = state_idx.get(&state) else {
            return Err(ModelError::Undeclared { line, name: state });
        };
        if rhs[j].is_some() {
            return Err(ModelError::DuplicateRhs { line, state });
        }
        rhs[j] = Some(expr);
    }
    if states.is_empty() {
        return Err(ModelError::NoStates);
    }
    let rhs = rhs
        .into_iter()
        .enumerate()
        .map(|(j, e)| {
            e.ok_or_else(|| ModelError::MissingRhs {
                state: states[j].clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut initial_guess = HashMap::new();
    if let Some((line, col, body)) = init_line {
        for part in body.split(',') {
            if part.trim().is_empty() {
                continue;
            }
            let Some((k, v)) = part.split_once('=') else {
                return Err(ModelError::Syntax {
                    line,
                    column: col,
                    message: format!("expected `name = value`, got `{}`", part.trim()),
                });
            };
            let k = k.trim();
            if !state_idx.contains_key(k) && !param_idx.contains_key(k) {
                return Err(ModelError::Undeclared {
                    line,
                    name: k.to_string(),
                });
            }
            let v: f64 = v.trim().parse().map_err(|_| ModelError::Syntax {
                line,
                column: col,
                message: format!("invalid number `{}`", v.trim()),
            })?;
            initial_guess.insert(k.to_string(), v);
        }
    }

    let mut model = OdeModel::new(name, states, params, rhs)?;
    model.set_initial_guess(initial_guess);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Var;

    #[test]
    fn minimal_model() {
        let m = parse_model("states: x1\nparams: psi1\nx1' = psi1 * x1").unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.n_params(), 1);
        assert_eq!(m.rhs()[0], Expr::mul(Expr::Param(0), Expr::State(0)));
    }

    #[test]
    fn truncated_expression_is_syntax_error_at_end() {
        let err = parse_model("x1' = psi1 *").unwrap_err();
        match err {
            ModelError::Syntax {
                line,
                column,
                message,
            } => {
                assert_eq!(line, 1);
                assert_eq!(column, 13);
                assert!(message.contains("end of input"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn undeclared_identifier() {
        let err = parse_model("states: x\nx' = k * x").unwrap_err();
        assert_eq!(
            err,
            ModelError::Undeclared {
                line: 2,
                name: "k".into()
            }
        );
    }

    #[test]
    fn duplicate_and_missing_rhs() {
        let err = parse_model("states: x\nx' = x\nx' = -x").unwrap_err();
        assert!(matches!(err, ModelError::DuplicateRhs { line: 3, .. }));
        let err = parse_model("states: x, y\nx' = y").unwrap_err();
        assert_eq!(err, ModelError::MissingRhs { state: "y".into() });
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expression("-x^2", &["x"], &[]).unwrap();
        assert_eq!(e.eval(&[3.0], &[], 0.0), -9.0);
        let e = parse_expression("2^3^2", &[], &[]).unwrap();
        assert_eq!(e.eval(&[], &[], 0.0), 512.0);
        let e = parse_expression("8 / 2 / 2 - 1 - 1", &[], &[]).unwrap();
        assert_eq!(e.eval(&[], &[], 0.0), 0.0);
        let e = parse_expression("2 * -x", &["x"], &[]).unwrap();
        assert_eq!(e.eval(&[3.0], &[], 0.0), -6.0);
        let e = parse_expression("1.5e-1 * t + 2E2", &[], &[]).unwrap();
        assert!((e.eval(&[], &[], 2.0) - 200.3).abs() < 1e-12);
    }

    #[test]
    fn comments_init_and_time() {
        let src = "# decay with forcing\nname: forced\nstates: x\nparams: k\ninit: x = 2, k = -0.5\nx' = k * x + sin(t) # forcing\n";
        let m = parse_model(src).unwrap();
        assert_eq!(m.name(), "forced");
        assert_eq!(m.initial_eta().unwrap(), vec![2.0, -0.5]);
        assert_eq!(m.rhs_partial_state(0, 0), &Expr::Param(0));
        let _ = Var::State(0);
    }

    #[test]
    fn reserved_names_rejected() {
        assert!(matches!(
            parse_model("states: t\nt' = 1"),
            Err(ModelError::Syntax { .. })
        ));
        assert!(matches!(
            parse_model("states: x\nparams: x\nx' = x"),
            Err(ModelError::DuplicateName { .. })
        ));
    }

    #[test]
    fn bad_character_reports_column() {
        let err = parse_model("states: x\nx' = x $ 2").unwrap_err();
        assert_eq!(
            err,
            ModelError::Syntax {
                line: 2,
                column: 8,
                message: "unexpected character `$`".into()
            }
        );
    }
}
