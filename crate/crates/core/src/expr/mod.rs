//! Scalar expressions over the state variables `x1..xn` and time `t`.
//!
//! Expressions are immutable, reference-counted trees. Structurally shared
//! subtrees stay shared through differentiation, and every node memoizes its
//! partial derivatives, so iterated Lie brackets of moderate length stay
//! cheap to build. Construction goes through smart constructors that apply a
//! light set of simplifications (constant folding, neutral elements, zero
//! annihilation); there is no attempt at a canonical form.

mod eval;
mod parse;

use std::fmt;
use std::sync::{Arc, Mutex};

pub use eval::{eval_jet, DomainError, Jet, Tape};
pub use parse::{parse_expression, ParseError, ParseErrorKind};

/// Elementary functions accepted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan" => Func::Atan,
            _ => return None,
        })
    }

    /// Applies the function, returning `None` outside its real domain.
    pub fn apply(self, v: f64) -> Option<f64> {
        let r = match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => {
                if v <= 0.0 {
                    return None;
                }
                v.ln()
            }
            Func::Sqrt => {
                if v < 0.0 {
                    return None;
                }
                v.sqrt()
            }
            Func::Atan => v.atan(),
        };
        Some(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Node kinds. Variables are stored zero-based (`x1` is `Var(0)`).
#[derive(Debug, Clone)]
pub enum Node {
    Const(f64),
    Var(usize),
    Time,
    Neg(Expr),
    Unary(Func, Expr),
    Binary(BinOp, Expr, Expr),
    Pow(Expr, u32),
}

struct Inner {
    node: Node,
    // Memoized partial derivatives, keyed by variable index.
    derivs: Mutex<Vec<(usize, Expr)>>,
}

/// Immutable expression handle; cloning is a reference-count bump.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    fn from_node(node: Node) -> Expr {
        Expr(Arc::new(Inner {
            node,
            derivs: Mutex::new(Vec::new()),
        }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn constant(c: f64) -> Expr {
        Expr::from_node(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    /// State variable with zero-based index.
    pub fn var(index: usize) -> Expr {
        Expr::from_node(Node::Var(index))
    }

    pub fn time() -> Expr {
        Expr::from_node(Node::Time)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// True if `t` occurs anywhere in the tree.
    pub fn depends_on_time(&self) -> bool {
        match self.node() {
            Node::Time => true,
            Node::Const(_) | Node::Var(_) => false,
            Node::Neg(a) | Node::Unary(_, a) | Node::Pow(a, _) => a.depends_on_time(),
            Node::Binary(_, a, b) => a.depends_on_time() || b.depends_on_time(),
        }
    }

    pub(crate) fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as *const u8 as usize
    }

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::from_node(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => other.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => match other.node() {
                Node::Neg(inner) => Expr::from_node(Node::Binary(BinOp::Sub, self.clone(), inner.clone())),
                _ => Expr::from_node(Node::Binary(BinOp::Add, self.clone(), other.clone())),
            },
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(a), _) if a == 0.0 => other.neg(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => match other.node() {
                Node::Neg(inner) => Expr::from_node(Node::Binary(BinOp::Add, self.clone(), inner.clone())),
                _ => Expr::from_node(Node::Binary(BinOp::Sub, self.clone(), other.clone())),
            },
        }
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 0.0 => Expr::zero(),
            (Some(a), _) if a == 1.0 => other.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => other.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Expr::from_node(Node::Binary(BinOp::Mul, self.clone(), other.clone())),
        }
    }

    pub fn div(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr::from_node(Node::Binary(BinOp::Div, self.clone(), other.clone())),
        }
    }

    pub fn powi(&self, k: u32) -> Expr {
        match (k, self.as_const()) {
            (0, _) => Expr::one(),
            (1, _) => self.clone(),
            (_, Some(c)) => Expr::constant(c.powi(k as i32)),
            _ => Expr::from_node(Node::Pow(self.clone(), k)),
        }
    }

    pub fn apply(&self, func: Func) -> Expr {
        if let Some(c) = self.as_const() {
            if let Some(v) = func.apply(c) {
                return Expr::constant(v);
            }
        }
        Expr::from_node(Node::Unary(func, self.clone()))
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::constant(c).mul(self)
    }

    /// Largest zero-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self.node() {
            Node::Const(_) | Node::Time => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Unary(_, a) | Node::Pow(a, _) => a.max_var(),
            Node::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    /// Symbolic partial derivative with respect to the zero-based variable `var`.
    pub fn diff(&self, var: usize) -> Expr {
        if let Some(d) = self
            .0
            .derivs
            .lock()
            .expect("derivative cache poisoned")
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, d)| d.clone())
        {
            return d;
        }
        let d = self.diff_uncached(var);
        let mut cache = self.0.derivs.lock().expect("derivative cache poisoned");
        if !cache.iter().any(|(v, _)| *v == var) {
            cache.push((var, d.clone()));
        }
        d
    }

    fn diff_uncached(&self, var: usize) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Time => Expr::zero(),
            Node::Var(i) => {
                if *i == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => a.diff(var).neg(),
            Node::Binary(op, a, b) => {
                let da = a.diff(var);
                let db = b.diff(var);
                match op {
                    BinOp::Add => da.add(&db),
                    BinOp::Sub => da.sub(&db),
                    BinOp::Mul => da.mul(b).add(&a.mul(&db)),
                    BinOp::Div => {
                        if db.is_zero() {
                            da.div(b)
                        } else {
                            da.mul(b).sub(&a.mul(&db)).div(&b.powi(2))
                        }
                    }
                }
            }
            Node::Pow(a, k) => {
                let da = a.diff(var);
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::constant(*k as f64).mul(&a.powi(k - 1)).mul(&da)
            }
            Node::Unary(func, a) => {
                let da = a.diff(var);
                if da.is_zero() {
                    return Expr::zero();
                }
                let outer = match func {
                    Func::Sin => a.apply(Func::Cos),
                    Func::Cos => a.apply(Func::Sin).neg(),
                    Func::Tan => Expr::one().add(&a.apply(Func::Tan).powi(2)),
                    Func::Exp => self.clone(),
                    Func::Log => return da.div(a),
                    Func::Sqrt => return da.div(&self.scale(2.0)),
                    Func::Atan => return da.div(&Expr::one().add(&a.powi(2))),
                };
                outer.mul(&da)
            }
        }
    }

    /// Substitutes every variable `x_i` by `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Time => self.clone(),
            Node::Var(i) => subs.get(*i).cloned().unwrap_or_else(|| self.clone()),
            Node::Neg(a) => a.substitute(subs).neg(),
            Node::Unary(f, a) => a.substitute(subs).apply(*f),
            Node::Pow(a, k) => a.substitute(subs).powi(*k),
            Node::Binary(op, a, b) => {
                let (a, b) = (a.substitute(subs), b.substitute(subs));
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b),
                }
            }
        }
    }

    /// Number of nodes in the tree, counting shared subtrees once per use.
    pub fn size(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Time => 1,
            Node::Neg(a) | Node::Unary(_, a) | Node::Pow(a, _) => 1 + a.size(),
            Node::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Direct tree-walking evaluation. Prefer [`Tape`] in hot loops.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, DomainError> {
        Tape::compile(std::slice::from_ref(self)).eval_one(t, x)
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Node::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            Node::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

impl std::ops::Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl std::ops::Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl std::ops::Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.is_finite() {
        // Both forms round-trip; `{:?}` keeps huge and tiny values short.
        let a = c.abs();
        let s = if a.fract() == 0.0 && a < 1e16 { format!("{a}") } else { format!("{a:?}") };
        if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
            write!(f, "-{s}")
        } else {
            write!(f, "{s}")
        }
    } else {
        // Non-finite constants only arise from folding; print something parseable.
        write!(f, "(1/0)")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write_const(f, *c),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Time => write!(f, "t"),
            Node::Neg(a) => {
                write!(f, "-")?;
                write_operand(f, a, 4)
            }
            Node::Unary(func, a) => write!(f, "{}({a})", func.name()),
            Node::Pow(a, k) => {
                write_operand(f, a, 5)?;
                write!(f, "^{k}")
            }
            Node::Binary(op, a, b) => {
                let (lp, rp) = match op {
                    BinOp::Add => (1, 2),
                    BinOp::Sub => (1, 2),
                    BinOp::Mul => (2, 3),
                    BinOp::Div => (2, 3),
                };
                write_operand(f, a, lp)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, b, rp)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Expr {
        parse_expression(s, n).unwrap()
    }

    #[test]
    fn simplification_rules() {
        let x = Expr::var(0);
        assert!(x.mul(&Expr::zero()).is_zero());
        assert_eq!(x.add(&Expr::zero()).ptr_id(), x.ptr_id());
        assert_eq!(Expr::constant(2.0).mul(&Expr::constant(3.5)).as_const(), Some(7.0));
        assert_eq!(x.neg().neg().ptr_id(), x.ptr_id());
        assert_eq!(x.powi(0).as_const(), Some(1.0));
    }

    #[test]
    fn derivative_of_polynomial() {
        let e = p("1 + x2^2", 2);
        let d = e.diff(1);
        assert_eq!(d.eval(0.0, &[0.3, 1.5]).unwrap(), 3.0);
        assert!(e.diff(0).is_zero());
    }

    #[test]
    fn derivative_cache_returns_same_tree() {
        let e = p("sin(x1)*x2", 2);
        let a = e.diff(0);
        let b = e.diff(0);
        assert_eq!(a.ptr_id(), b.ptr_id());
    }

    #[test]
    fn derivatives_of_elementary_functions() {
        let cases = [
            ("sin(x1)", 0.7f64, 0.7f64.cos()),
            ("cos(x1)", 0.7, -(0.7f64.sin())),
            ("tan(x1)", 0.7, 1.0 / 0.7f64.cos().powi(2)),
            ("exp(x1)", 0.7, 0.7f64.exp()),
            ("log(x1)", 0.7, 1.0 / 0.7),
            ("sqrt(x1)", 0.7, 0.5 / 0.7f64.sqrt()),
            ("atan(x1)", 0.7, 1.0 / 1.49),
            ("1/x1", 0.7, -1.0 / 0.49),
        ];
        for (src, x, want) in cases {
            let got = p(src, 1).diff(0).eval(0.0, &[x]).unwrap();
            assert!((got - want).abs() < 1e-12, "{src}: {got} vs {want}");
        }
    }

    #[test]
    fn display_round_trips() {
        for src in ["1 + x2^2", "sin(x1)*x3", "-(x1 - x2)^3 / (2.5e-3 + t)", "x1 - (x2 - x3)", "x1/(x2*x3)"] {
            let e = p(src, 3);
            let again = p(&e.to_string(), 3);
            let pt = [0.3, -1.2, 0.8];
            assert_eq!(e.eval(0.4, &pt).unwrap(), again.eval(0.4, &pt).unwrap(), "{src} -> {e}");
        }
    }

    #[test]
    fn substitute_composes() {
        let e = p("x1*x2", 2);
        let s = e.substitute(&[p("x2 + 1", 2), p("3", 2)]);
        assert_eq!(s.eval(0.0, &[0.0, 2.0]).unwrap(), 9.0);
    }
}
