//! Vector-field algebra in a single chart of `R^n`.
//!
//! Bracket convention used throughout the crate:
//!
//! ```text
//! [f, g](x) = Dg(x) f(x) - Df(x) g(x)
//! ```
//!
//! With this choice the Poisson bracket of the linear-in-λ Hamiltonians
//! `h_f = <λ, f>` satisfies `{h_f, h_g} = h_[f,g]`, and every Goh-matrix
//! entry, Pfaffian row and recovered control inherits its sign from here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{DomainError, Expr, Tape};
use crate::system::SystemSpec;

/// Default relative rank tolerance (against the largest singular value).
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Singular values at or below this are zero regardless of scale.
pub const RANK_ABS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct VectorField {
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> Self {
        VectorField { components }
    }

    pub fn zero(n: usize) -> Self {
        VectorField {
            components: vec![Expr::zero(); n],
        }
    }

    /// Constant coordinate field `∂/∂x_{axis+1}`.
    pub fn coordinate(n: usize, axis: usize) -> Self {
        let mut c = vec![Expr::zero(); n];
        c[axis] = Expr::one();
        VectorField { components: c }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Expr {
        &self.components[i]
    }

    pub fn is_identically_zero(&self) -> bool {
        self.components.iter().all(Expr::is_zero)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> std::result::Result<Vec<f64>, DomainError> {
        Tape::compile(&self.components).eval(t, x)
    }

    pub fn scaled(&self, c: f64) -> Self {
        VectorField::new(self.components.iter().map(|e| e.scale(c)).collect())
    }

    pub fn add(&self, other: &VectorField) -> Self {
        VectorField::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect(),
        )
    }

    /// Jacobian entries `∂f_i/∂x_j`, row-major.
    pub fn jacobian(&self) -> Vec<Expr> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for c in &self.components {
            for j in 0..n {
                out.push(c.diff(j));
            }
        }
        out
    }

    /// `Df(x) · v` as expressions.
    fn directional(&self, v: &VectorField) -> Vec<Expr> {
        let n = self.dim();
        self.components
            .iter()
            .map(|c| {
                let mut acc = Expr::zero();
                for j in 0..n {
                    if v.components[j].is_zero() {
                        continue;
                    }
                    let d = c.diff(j);
                    if d.is_zero() {
                        continue;
                    }
                    acc = acc.add(&d.mul(&v.components[j]));
                }
                acc
            })
            .collect()
    }
}

/// Lie bracket `[f, g] = Dg·f − Df·g`.
pub fn lie_bracket(f: &VectorField, g: &VectorField) -> Result<VectorField> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: g.dim(),
            what: "vector field",
        });
    }
    let dg_f = g.directional(f);
    let df_g = f.directional(g);
    Ok(VectorField::new(
        dg_f.iter().zip(&df_g).map(|(a, b)| a.sub(b)).collect(),
    ))
}

/// `ad^k g (h)`: `ad^0 g(h) = h`, `ad^k g(h) = [g, ad^{k-1} g(h)]`.
pub fn ad_power(g: &VectorField, h: &VectorField, k: usize) -> Result<VectorField> {
    let mut acc = h.clone();
    if g.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: h.dim(),
            what: "vector field",
        });
    }
    for _ in 0..k {
        acc = lie_bracket(g, &acc)?;
    }
    Ok(acc)
}

/// Left-nested bracket `f_L = [[…[f_{l1}, f_{l2}], …], f_{lk}]`.
///
/// `fields[i]` is the field with index `i` in the multi-index alphabet.
pub fn bracket_multiindex(fields: &[VectorField], index: &[usize]) -> Result<VectorField> {
    let (&first, rest) = index.split_first().ok_or(Error::EmptyMultiIndex)?;
    let lookup = |i: usize| {
        fields.get(i).ok_or(Error::InvalidFieldIndex {
            index: i,
            count: fields.len(),
        })
    };
    let mut acc = lookup(first)?.clone();
    for &l in rest {
        acc = lie_bracket(&acc, lookup(l)?)?;
    }
    Ok(acc)
}

/// Numerical rank of a column family: singular values above
/// `tol · σ_max` and above the absolute floor.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter()
        .filter(|&&s| s > tol * smax && s > RANK_ABS_FLOOR)
        .count()
}

/// Builds the `n × k` matrix whose columns are the given values.
pub fn columns(values: &[Vec<f64>]) -> DMatrix<f64> {
    let n = values.first().map(Vec::len).unwrap_or(0);
    DMatrix::from_fn(n, values.len(), |i, j| values[j][i])
}

/// Rank of `{f_1(x), …, f_k(x)}` at one point.
pub fn rank_at(fields: &[VectorField], t: f64, x: &[f64], tol: f64) -> Result<usize> {
    let values = fields
        .iter()
        .map(|f| f.eval(t, x))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(numerical_rank(&columns(&values), tol))
}

/// Closed subset of `[0, T]` where the field family loses rank, at grid
/// resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdepSet {
    pub intervals: Vec<(f64, f64)>,
    pub tolerance: f64,
    /// Grid indices flagged as dependent.
    pub indices: Vec<usize>,
}

impl IdepSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains_index(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }
}

/// Merges flagged grid points into maximal closed intervals.
pub fn merge_flags(times: &[f64], flags: &[bool], tolerance: f64) -> IdepSet {
    let mut intervals = Vec::new();
    let mut indices = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &f) in flags.iter().enumerate() {
        if f {
            indices.push(k);
            if start.is_none() {
                start = Some(k);
            }
        } else if let Some(s) = start.take() {
            intervals.push((times[s], times[k - 1]));
        }
    }
    if let Some(s) = start {
        intervals.push((times[s], times[flags.len() - 1]));
    }
    IdepSet {
        intervals,
        tolerance,
        indices,
    }
}

/// Grid points where `rank{f_0, …, f_m} < m + 1` (affine) or
/// `rank{f_1, …, f_m} < m` (driftless), merged into intervals.
pub fn idep_of_trajectory(
    spec: &SystemSpec,
    times: &[f64],
    states: &[Vec<f64>],
    tol: f64,
) -> Result<IdepSet> {
    let family = spec.rank_family();
    let need = family.len();
    let tape = Tape::compile(
        &family
            .iter()
            .flat_map(|f| f.components().iter().cloned())
            .collect::<Vec<_>>(),
    );
    let n = spec.n;
    let mut scratch = Vec::new();
    let mut buf = vec![0.0; n * need];
    let mut flags = Vec::with_capacity(times.len());
    for (t, x) in times.iter().zip(states) {
        tape.eval_into(*t, x, &mut scratch, &mut buf)?;
        let m = DMatrix::from_fn(n, need, |i, j| buf[j * n + i]);
        flags.push(numerical_rank(&m, tol) < need);
    }
    Ok(merge_flags(times, &flags, tol))
}
