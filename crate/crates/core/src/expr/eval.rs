use std::collections::HashMap;
use std::fmt;

use super::{BinOp, Expr, Func, Node};

/// Evaluation left the real domain of a function (log/sqrt of an invalid
/// argument, division by zero, or a non-finite intermediate).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct DomainError {
    pub subexpression: String,
    pub argument: f64,
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "domain error in `{}` (argument {})",
            self.subexpression, self.argument
        )
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Time,
    Neg(usize),
    Unary(Func, usize),
    Binary(BinOp, usize, usize),
    Pow(usize, u32),
}

/// A flattened, common-subexpression-shared program evaluating several
/// expressions at once. Structurally shared subtrees are emitted once.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    // Source expression for ops that can fail, for diagnostics.
    fallible: HashMap<usize, Expr>,
    n_vars: usize,
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut tape = Tape {
            ops: Vec::new(),
            outputs: Vec::with_capacity(exprs.len()),
            fallible: HashMap::new(),
            n_vars: 0,
        };
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for e in exprs {
            let slot = tape.emit(e, &mut seen);
            tape.outputs.push(slot);
        }
        tape
    }

    fn emit(&mut self, e: &Expr, seen: &mut HashMap<usize, usize>) -> usize {
        if let Some(&slot) = seen.get(&e.ptr_id()) {
            return slot;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Var(i) => {
                self.n_vars = self.n_vars.max(i + 1);
                Op::Var(*i)
            }
            Node::Time => Op::Time,
            Node::Neg(a) => Op::Neg(self.emit(a, seen)),
            Node::Unary(f, a) => Op::Unary(*f, self.emit(a, seen)),
            Node::Pow(a, k) => Op::Pow(self.emit(a, seen), *k),
            Node::Binary(op, a, b) => {
                let a = self.emit(a, seen);
                let b = self.emit(b, seen);
                Op::Binary(*op, a, b)
            }
        };
        let slot = self.ops.len();
        if matches!(op, Op::Unary(Func::Log | Func::Sqrt, _) | Op::Binary(BinOp::Div, ..)) {
            self.fallible.insert(slot, e.clone());
        }
        self.ops.push(op);
        seen.insert(e.ptr_id(), slot);
        slot
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Number of state variables the tape reads (one past the largest index).
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn fail(&self, slot: usize, arg: f64) -> DomainError {
        DomainError {
            subexpression: self
                .fallible
                .get(&slot)
                .map(|e| e.to_string())
                .unwrap_or_else(|| "<intermediate>".into()),
            argument: arg,
        }
    }

    /// Evaluates all outputs into `out`, using `scratch` as register storage.
    pub fn eval_into(
        &self,
        t: f64,
        x: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), DomainError> {
        assert!(x.len() >= self.n_vars, "point has {} coordinates, tape reads {}", x.len(), self.n_vars);
        scratch.clear();
        scratch.reserve(self.ops.len());
        for (slot, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => x[i],
                Op::Time => t,
                Op::Neg(a) => -scratch[a],
                Op::Pow(a, k) => scratch[a].powi(k as i32),
                Op::Unary(f, a) => {
                    let arg = scratch[a];
                    f.apply(arg).ok_or_else(|| self.fail(slot, arg))?
                }
                Op::Binary(op, a, b) => {
                    let (a, b) = (scratch[a], scratch[b]);
                    match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                        BinOp::Div => {
                            if b == 0.0 {
                                return Err(self.fail(slot, b));
                            }
                            a / b
                        }
                    }
                }
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot];
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, DomainError> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(t, x, &mut scratch, &mut out)?;
        Ok(out)
    }

    pub fn eval_one(&self, t: f64, x: &[f64]) -> Result<f64, DomainError> {
        Ok(self.eval(t, x)?[0])
    }
}

/// Value and all partial derivatives up to a given order at one point.
///
/// Entries are keyed by non-decreasing tuples of zero-based variable
/// indices; the empty tuple is the value itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub order: usize,
    pub n: usize,
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl Jet {
    pub fn value(&self) -> f64 {
        self.entries[0].1
    }

    /// Partial derivative for an arbitrary (unsorted) index tuple.
    pub fn get(&self, index: &[usize]) -> Option<f64> {
        let mut key = index.to_vec();
        key.sort_unstable();
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(&[i]).unwrap_or(0.0)).collect()
    }
}

fn multi_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::new();
        for idx in &frontier {
            let lo = idx.last().copied().unwrap_or(0);
            for j in lo..n {
                let mut k: Vec<usize> = idx.clone();
                k.push(j);
                next.push(k);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Evaluates `e` and every partial derivative up to `order` at `(t, x)`.
pub fn eval_jet(e: &Expr, t: f64, x: &[f64], order: usize) -> Result<Jet, DomainError> {
    let n = x.len();
    let keys = multi_indices(n, order);
    let mut trees: Vec<Expr> = Vec::with_capacity(keys.len());
    for key in &keys {
        let tree = match key.split_last() {
            None => e.clone(),
            Some((last, prefix)) => {
                // Parent entry (prefix) was pushed earlier since keys are
                // generated by increasing length.
                let parent = keys.iter().position(|k| k.as_slice() == prefix).expect("prefix present");
                trees[parent].diff(*last)
            }
        };
        trees.push(tree);
    }
    let values = Tape::compile(&trees).eval(t, x)?;
    Ok(Jet {
        order,
        n,
        entries: keys.into_iter().zip(values).collect(),
    })
}

impl Expr {
    pub fn jet(&self, t: f64, x: &[f64], order: usize) -> Result<Jet, DomainError> {
        eval_jet(self, t, x, order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    #[test]
    fn jet_of_square() {
        let e = parse_expression("x2^2", 2).unwrap();
        let j = e.jet(0.0, &[0.0, 3.0], 2).unwrap();
        assert_eq!(j.value(), 9.0);
        assert_eq!(j.get(&[1]), Some(6.0));
        assert_eq!(j.get(&[1, 1]), Some(2.0));
        assert_eq!(j.get(&[0, 1]), Some(0.0));
        assert_eq!(j.entries.len(), 1 + 2 + 3);
    }

    #[test]
    fn jet_along_flat_direction() {
        let e = parse_expression("1 + x2^2", 2).unwrap();
        let j = e.jet(0.0, &[0.37, 0.0], 1).unwrap();
        assert_eq!(j.value(), 1.0);
        assert_eq!(j.gradient(), vec![0.0, 0.0]);
    }

    #[test]
    fn jet_of_exp_at_zero() {
        let e = parse_expression("exp(x1)", 1).unwrap();
        let j = e.jet(0.0, &[0.0], 3).unwrap();
        assert!(j.entries.iter().all(|(_, v)| *v == 1.0));
        assert_eq!(j.entries.len(), 4);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse_expression("1 + log(x1 - 2)", 1).unwrap();
        let err = e.eval(0.0, &[1.0]).unwrap_err();
        assert_eq!(err.subexpression, "log(x1 - 2)");
        assert_eq!(err.argument, -1.0);
        let e = parse_expression("sqrt(x1)", 1).unwrap();
        assert!(e.jet(0.0, &[-1.0], 1).is_err());
        let e = parse_expression("1/x1", 1).unwrap();
        assert!(e.eval(0.0, &[0.0]).is_err());
    }

    #[test]
    fn tape_shares_subexpressions() {
        let inner = parse_expression("sin(x1)*x2", 2).unwrap();
        let a = inner.add(&inner);
        let tape = Tape::compile(&[a.clone(), inner.clone()]);
        // x1, sin, x2, mul, add
        assert_eq!(tape.len(), 5);
        let v = tape.eval(0.0, &[0.5, 2.0]).unwrap();
        assert!((v[0] - 2.0 * v[1]).abs() < 1e-15);
    }
}
