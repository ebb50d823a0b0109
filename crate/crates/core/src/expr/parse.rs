//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := base ("^" integer)?
//! base   := number | ident | "(" expr ")" | func "(" expr ")"
//! func   := "sin"|"cos"|"tan"|"exp"|"log"|"sqrt"|"atan"
//! ident  := "x" integer | "t"
//! ```
//!
//! One extension: a factor may be prefixed by a unary minus, so that
//! `-x1` and the printed form of negative constants are accepted.

use std::fmt;

use super::{Expr, Func};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken { found: String, expected: &'static str },
    UnexpectedEnd { expected: &'static str },
    UnknownIdentifier(String),
    VariableIndexOutOfRange { index: usize, n: usize },
    BadNumber(String),
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at offset {}: ", self.position)?;
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found {found:?}")
            }
            ParseErrorKind::UnexpectedEnd { expected } => write!(f, "expected {expected}, found end of input"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier {s:?}"),
            ParseErrorKind::VariableIndexOutOfRange { index, n } => {
                write!(f, "variable x{index} out of range 1..={n}")
            }
            ParseErrorKind::BadNumber(s) => write!(f, "malformed number {s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(u64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => v.to_string(),
            Tok::Int(v) => v.to_string(),
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::Caret => "^".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((start, Tok::Plus)),
            b'-' => out.push((start, Tok::Minus)),
            b'*' => out.push((start, Tok::Star)),
            b'/' => out.push((start, Tok::Slash)),
            b'^' => out.push((start, Tok::Caret)),
            b'(' => out.push((start, Tok::LParen)),
            b')' => out.push((start, Tok::RParen)),
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                let mut is_int = true;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    is_int = false;
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        is_int = false;
                        j = k;
                    }
                }
                let text = &src[start..j];
                let tok = if is_int {
                    match text.parse::<u64>() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => Tok::Num(parse_float(text, start)?),
                    }
                } else {
                    Tok::Num(parse_float(text, start)?)
                };
                out.push((start, tok));
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((start, Tok::Ident(src[start..j].to_string())));
                i = j;
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    position: start,
                    kind: ParseErrorKind::UnexpectedChar(ch),
                });
            }
        }
        i += 1;
    }
    Ok(out)
}

fn parse_float(text: &str, pos: usize) -> Result<f64, ParseError> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError {
            position: pos,
            kind: ParseErrorKind::BadNumber(text.to_string()),
        }),
    }
}

struct Parser<'a> {
    toks: &'a [(usize, Tok)],
    pos: usize,
    end: usize,
    n: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn error(&self, expected: &'static str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError {
                position: self.offset(),
                kind: ParseErrorKind::UnexpectedToken {
                    found: t.describe(),
                    expected,
                },
            },
            None => ParseError {
                position: self.end,
                kind: ParseErrorKind::UnexpectedEnd { expected },
            },
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    acc = acc.mul(&self.factor()?);
                }
                Some(Tok::Slash) => {
                    self.bump();
                    acc = acc.div(&self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(self.factor()?.neg());
        }
        let base = self.base()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            return match self.bump() {
                Some(Tok::Int(k)) if k <= u32::MAX as u64 => Ok(base.powi(k as u32)),
                _ => {
                    self.pos -= 1;
                    Err(self.error("non-negative integer exponent"))
                }
            };
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::constant(v)),
            Some(Tok::Int(v)) => Ok(Expr::constant(v as f64)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => self.ident(name, at),
            Some(_) => {
                self.pos -= 1;
                Err(self.error("number, variable, function or '('"))
            }
            None => Err(self.error("number, variable, function or '('")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error("')'")),
        }
    }

    fn ident(&mut self, name: String, at: usize) -> Result<Expr, ParseError> {
        if name == "t" {
            return Ok(Expr::time());
        }
        if let Some(func) = Func::from_name(&name) {
            match self.peek() {
                Some(Tok::LParen) => {
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(arg.apply(func));
                }
                _ => return Err(self.error("'(' after function name")),
            }
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| ParseError {
                    position: at,
                    kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                })?;
                if index == 0 || index > self.n {
                    return Err(ParseError {
                        position: at,
                        kind: ParseErrorKind::VariableIndexOutOfRange { index, n: self.n },
                    });
                }
                return Ok(Expr::var(index - 1));
            }
        }
        Err(ParseError {
            position: at,
            kind: ParseErrorKind::UnknownIdentifier(name),
        })
    }
}

/// Parses `source` as an expression in the state variables `x1..xn` and `t`.
pub fn parse_expression(source: &str, n: usize) -> Result<Expr, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: source.len(),
        n,
    };
    let e = p.expr()?;
    if p.pos < toks.len() {
        return Err(p.error("operator or end of input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Node;

    #[test]
    fn parses_drift_component() {
        let e = parse_expression("1 + x2^2", 2).unwrap();
        match e.node() {
            Node::Binary(crate::expr::BinOp::Add, a, b) => {
                assert_eq!(a.as_const(), Some(1.0));
                assert!(matches!(b.node(), Node::Pow(_, 2)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn parses_zero_and_evaluates_sin() {
        assert_eq!(parse_expression("0", 3).unwrap().as_const(), Some(0.0));
        let e = parse_expression("sin(x1)*x3", 3).unwrap();
        let v = e.eval(0.0, &[std::f64::consts::FRAC_PI_2, 0.0, 2.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn numbers_with_exponents() {
        let e = parse_expression("2.5e-3 + 1E2 + .5", 1).unwrap();
        assert_eq!(e.as_const(), Some(0.0025 + 100.0 + 0.5));
    }

    #[test]
    fn positioned_errors() {
        let err = parse_expression("1 + * x1", 1).unwrap_err();
        assert_eq!(err.position, 4);
        let err = parse_expression("x4 + 1", 3).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::VariableIndexOutOfRange { index: 4, n: 3 });
        let err = parse_expression("1 + y", 1).unwrap_err();
        assert_eq!(err.position, 4);
        assert!(matches!(err.kind, ParseErrorKind::UnknownIdentifier(_)));
        let err = parse_expression("(x1 + 2", 1).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnexpectedEnd { .. }));
        let err = parse_expression("x1^2.5", 1).unwrap_err();
        assert_eq!(err.position, 3);
        let err = parse_expression("x1 $ 2", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedChar('$'));
        let err = parse_expression("x1 x2", 2).unwrap_err();
        assert_eq!(err.position, 3);
        let err = parse_expression("sin x1", 1).unwrap_err();
        assert_eq!(err.position, 4);
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_expression("x1*x2+t", 2).unwrap();
        let b = parse_expression("  x1 *\tx2 +\n t ", 2).unwrap();
        assert_eq!(a.eval(0.5, &[2.0, 3.0]).unwrap(), b.eval(0.5, &[2.0, 3.0]).unwrap());
    }
}
