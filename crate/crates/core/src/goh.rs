//! Goh matrices along abnormal extremals and recovery of singular controls.
//!
//! Along an abnormal extremal `h_i = <λ, f_i> ≡ 0` for `i ≥ 1`, and one
//! differentiation gives `G u = b` with `G_ij = h_ij`, `b_i = −h_i0`. When
//! the relevant skew matrix has odd size it is singular and its Pfaffian `P`
//! vanishes identically, so a second differentiation supplies the row
//! `({P, h_j})_j` used to build the augmented system `G̃ u = b̃`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Tape;
use crate::extremal::{ControlLaw, Extremal};
use crate::lie::{bracket_multiindex, numerical_rank, IdepSet, DEFAULT_RANK_TOL};
use crate::system::{CompiledSystem, SystemSpec};

/// Pfaffian of an even-size skew-symmetric matrix by expansion along the
/// first row.
pub fn pfaffian(a: &DMatrix<f64>) -> Result<f64> {
    let k = a.nrows();
    if a.ncols() != k {
        return Err(Error::Pfaffian("matrix is not square"));
    }
    if k % 2 == 1 {
        return Err(Error::Pfaffian("odd size"));
    }
    if k > 12 {
        return Err(Error::Pfaffian("size above 12"));
    }
    for i in 0..k {
        for j in i..k {
            if (a[(i, j)] + a[(j, i)]).abs() > 1e-12 {
                return Err(Error::Pfaffian("matrix is not skew-symmetric"));
            }
        }
    }
    let idx: Vec<usize> = (0..k).collect();
    Ok(pf_rec(a, &idx))
}

fn pf_rec(a: &DMatrix<f64>, idx: &[usize]) -> f64 {
    match idx.len() {
        0 => 1.0,
        2 => a[(idx[0], idx[1])],
        _ => {
            let i0 = idx[0];
            let mut rest = Vec::with_capacity(idx.len() - 2);
            let mut acc = 0.0;
            for p in 1..idx.len() {
                let aij = a[(i0, idx[p])];
                if aij == 0.0 {
                    continue;
                }
                rest.clear();
                rest.extend(idx[1..].iter().enumerate().filter(|(q, _)| q + 1 != p).map(|(_, v)| *v));
                let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * aij * pf_rec(a, &rest);
            }
            acc
        }
    }
}

/// `∂Pf/∂a_ij` for `i < j`, treating `a_ji = −a_ij`. The Pfaffian is affine
/// in each such pair, so the difference below is exact.
pub fn pfaffian_partial(a: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let idx: Vec<usize> = (0..a.nrows()).collect();
    let mut one = a.clone();
    one[(i, j)] = 1.0;
    one[(j, i)] = -1.0;
    let mut zero = a.clone();
    zero[(i, j)] = 0.0;
    zero[(j, i)] = 0.0;
    pf_rec(&one, &idx) - pf_rec(&zero, &idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityCase {
    /// Drift present, `m` even: `G u = b`.
    AffineEven,
    /// Drift present, `m` odd: `G̃ u = b̃` built from `Pf(Ḡ)`.
    AffineOdd,
    /// Driftless, `m` odd: `u ∈ ker G`.
    DriftlessOdd,
    /// Driftless, `m` even: `u ∈ ker G̃` built from `Pf(G)`.
    DriftlessEven,
}

impl ParityCase {
    pub fn of(spec: &SystemSpec) -> Self {
        match (spec.driftless, spec.m % 2 == 0) {
            (false, true) => ParityCase::AffineEven,
            (false, false) => ParityCase::AffineOdd,
            (true, false) => ParityCase::DriftlessOdd,
            (true, true) => ParityCase::DriftlessEven,
        }
    }

    pub fn augments(self) -> bool {
        matches!(self, ParityCase::AffineOdd | ParityCase::DriftlessEven)
    }

    /// Rank of the decisive matrix required for minimal order.
    pub fn required_rank(self, m: usize) -> usize {
        match self {
            ParityCase::AffineEven | ParityCase::AffineOdd => m,
            ParityCase::DriftlessOdd | ParityCase::DriftlessEven => m - 1,
        }
    }

    /// Goh verdicts carry no information for these sizes.
    pub fn goh_vacuous(self, m: usize) -> bool {
        match self {
            ParityCase::AffineEven | ParityCase::AffineOdd => m < 2,
            ParityCase::DriftlessOdd | ParityCase::DriftlessEven => m < 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GohOptions {
    pub rank_tol: f64,
    /// Relative residual allowed when solving `G̃ u = b̃` at grid points.
    pub residual_tol: f64,
}

impl Default for GohOptions {
    fn default() -> Self {
        GohOptions {
            rank_tol: DEFAULT_RANK_TOL,
            residual_tol: 1e-8,
        }
    }
}

/// Goh data at one point of an extremal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GohPoint {
    pub t: f64,
    /// `h_i` for the indices of the family (drift first when present).
    pub h: Vec<f64>,
    pub g: DMatrix<f64>,
    pub gbar: Option<DMatrix<f64>>,
    pub b: Option<DVector<f64>>,
    /// `Pf(Ḡ)` (affine odd), `Pf(G)` (even size `G`), absent otherwise.
    pub pfaffian: Option<f64>,
    pub gtilde: Option<DMatrix<f64>>,
    pub btilde: Option<DVector<f64>>,
    /// `Ḡ` with the extra row `({P̄, h_j})_{0≤j≤m}` in the affine odd case.
    pub ghat: Option<DMatrix<f64>>,
    pub rank_g: usize,
    pub rank_gbar: Option<usize>,
    pub rank_gtilde: Option<usize>,
    pub rank_ghat: Option<usize>,
}

impl GohPoint {
    /// The matrix whose rank decides minimal order.
    pub fn decisive(&self, case: ParityCase) -> &DMatrix<f64> {
        if case.augments() {
            self.gtilde.as_ref().expect("augmented case carries G̃")
        } else {
            &self.g
        }
    }

    pub fn decisive_rank(&self, case: ParityCase) -> usize {
        if case.augments() {
            self.rank_gtilde.unwrap_or(0)
        } else {
            self.rank_g
        }
    }

    /// Rank inequality between the drift-augmented and reduced matrices:
    /// `rank Ĝ ≤ rank G̃ + 1` for odd `m` with drift, `rank Ḡ ≤ rank G + 1`
    /// for even `m` with drift; driftless cases hold trivially.
    pub fn rank_inequality_holds(&self, case: ParityCase) -> bool {
        match case {
            ParityCase::AffineOdd => self.rank_ghat.unwrap_or(0) <= self.rank_gtilde.unwrap_or(0) + 1,
            ParityCase::AffineEven => self.rank_gbar.unwrap_or(0) <= self.rank_g + 1,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GohData {
    pub case: ParityCase,
    pub rank_tol: f64,
    pub points: Vec<GohPoint>,
}

/// Compiled bracket evaluators for the Goh construction of one system.
#[derive(Debug, Clone)]
pub struct GohSystem {
    pub case: ParityCase,
    pub n: usize,
    pub m: usize,
    first: usize,
    // Family indices in use: 0..=m with drift, 1..=m without.
    idx: Vec<usize>,
    // Pairs a < b over idx.
    pairs: Vec<(usize, usize)>,
    tape: Tape,
    n_level3: usize,
}

impl GohSystem {
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        let case = ParityCase::of(spec);
        let family = spec.family();
        let first = spec.first_index();
        let idx: Vec<usize> = (first..=spec.m).collect();
        let mut pairs = Vec::new();
        for (p, &a) in idx.iter().enumerate() {
            for &b in &idx[p + 1..] {
                pairs.push((a, b));
            }
        }
        let mut fields = Vec::new();
        for &i in &idx {
            fields.push(family[i].clone());
        }
        for &(a, b) in &pairs {
            fields.push(bracket_multiindex(&family, &[a, b])?);
        }
        let mut n_level3 = 0;
        if case.augments() {
            for &(a, b) in &pairs {
                for &j in &idx {
                    fields.push(bracket_multiindex(&family, &[a, b, j])?);
                    n_level3 += 1;
                }
            }
        }
        let tape = Tape::compile(
            &fields
                .iter()
                .flat_map(|f| f.components().iter().cloned())
                .collect::<Vec<_>>(),
        );
        Ok(GohSystem {
            case,
            n: spec.n,
            m: spec.m,
            first,
            idx,
            pairs,
            tape,
            n_level3,
        })
    }

    /// Evaluates all Goh matrices at `(t, x, λ)`.
    pub fn point(&self, t: f64, x: &[f64], lambda: &[f64], rank_tol: f64) -> Result<GohPoint> {
        let n = self.n;
        let m = self.m;
        let vals = self.tape.eval(t, x)?;
        let pair = |k: usize| -> f64 { vals[k * n..(k + 1) * n].iter().zip(lambda).map(|(a, b)| a * b).sum() };
        let l1 = self.idx.len();
        let h: Vec<f64> = (0..l1).map(pair).collect();
        let h2: Vec<f64> = (0..self.pairs.len()).map(|k| pair(l1 + k)).collect();
        let h3: Vec<f64> = (0..self.n_level3).map(|k| pair(l1 + self.pairs.len() + k)).collect();
        // Skew matrix over a contiguous index range starting at `lo`.
        let skew = |lo: usize| -> DMatrix<f64> {
            let size = m + 1 - lo;
            let mut g = DMatrix::zeros(size, size);
            for (k, &(a, b)) in self.pairs.iter().enumerate() {
                if a >= lo {
                    g[(a - lo, b - lo)] = h2[k];
                    g[(b - lo, a - lo)] = -h2[k];
                }
            }
            g
        };
        let g = skew(1);
        let rank_g = numerical_rank(&g, rank_tol);
        let mut out = GohPoint {
            t,
            h,
            g: g.clone(),
            gbar: None,
            b: None,
            pfaffian: None,
            gtilde: None,
            btilde: None,
            ghat: None,
            rank_g,
            rank_gbar: None,
            rank_gtilde: None,
            rank_ghat: None,
        };
        if self.first == 0 {
            let gbar = skew(0);
            out.b = Some(DVector::from_fn(m, |i, _| gbar[(0, i + 1)]));
            out.rank_gbar = Some(numerical_rank(&gbar, rank_tol));
            out.gbar = Some(gbar);
        }
        // Row ({P, h_j})_j for the Pfaffian of `base` (indices from `lo`).
        let poisson_row = |base: &DMatrix<f64>, lo: usize| -> Vec<f64> {
            let mut row = vec![0.0; self.idx.len()];
            for (k, &(a, b)) in self.pairs.iter().enumerate() {
                if a < lo {
                    continue;
                }
                let dp = pfaffian_partial(base, a - lo, b - lo);
                if dp == 0.0 {
                    continue;
                }
                for (jj, r) in row.iter_mut().enumerate() {
                    *r += dp * h3[k * self.idx.len() + jj];
                }
            }
            row
        };
        match self.case {
            ParityCase::AffineEven => {
                out.pfaffian = Some(pf_rec(&g, &(0..m).collect::<Vec<_>>()));
            }
            ParityCase::DriftlessOdd => {}
            ParityCase::AffineOdd => {
                let gbar = out.gbar.clone().expect("drift present");
                out.pfaffian = Some(pf_rec(&gbar, &(0..=m).collect::<Vec<_>>()));
                // Row over j = 0..=m; idx starts at 0 here.
                let row = poisson_row(&gbar, 0);
                let mut gt = DMatrix::zeros(m + 1, m);
                gt.view_mut((0, 0), (m, m)).copy_from(&g);
                for j in 0..m {
                    gt[(m, j)] = row[j + 1];
                }
                let b = out.b.clone().expect("drift present");
                let mut bt = DVector::zeros(m + 1);
                bt.rows_mut(0, m).copy_from(&b);
                bt[m] = -row[0];
                let mut gh = DMatrix::zeros(m + 2, m + 1);
                gh.view_mut((0, 0), (m + 1, m + 1)).copy_from(&gbar);
                for j in 0..=m {
                    gh[(m + 1, j)] = row[j];
                }
                out.rank_gtilde = Some(numerical_rank(&gt, rank_tol));
                out.rank_ghat = Some(numerical_rank(&gh, rank_tol));
                out.gtilde = Some(gt);
                out.btilde = Some(bt);
                out.ghat = Some(gh);
            }
            ParityCase::DriftlessEven => {
                out.pfaffian = Some(pf_rec(&g, &(0..m).collect::<Vec<_>>()));
                let row = poisson_row(&g, 1);
                let mut gt = DMatrix::zeros(m + 1, m);
                gt.view_mut((0, 0), (m, m)).copy_from(&g);
                for j in 0..m {
                    gt[(m, j)] = row[j];
                }
                out.rank_gtilde = Some(numerical_rank(&gt, rank_tol));
                out.gtilde = Some(gt);
            }
        }
        Ok(out)
    }

    /// Control (affine) or unit direction (driftless) at one point.
    ///
    /// `reference` orients kernel vectors; with `strict` the residual of
    /// the linear system is checked against `opts.residual_tol`.
    pub fn solve_point(
        &self,
        pt: &GohPoint,
        reference: Option<&[f64]>,
        opts: &GohOptions,
        strict: bool,
    ) -> Result<(Vec<f64>, f64)> {
        let m = self.m;
        let need = self.case.required_rank(m);
        let rank = pt.decisive_rank(self.case);
        if rank < need {
            return Err(Error::RankDeficient {
                t: pt.t,
                rank,
                required: need,
                tol: opts.rank_tol,
            });
        }
        match self.case {
            ParityCase::AffineEven | ParityCase::AffineOdd => {
                let (a, b) = if self.case == ParityCase::AffineEven {
                    (&pt.g, pt.b.as_ref().expect("drift present"))
                } else {
                    (pt.gtilde.as_ref().expect("augmented"), pt.btilde.as_ref().expect("augmented"))
                };
                let svd = a.clone().svd(true, true);
                let smax = svd.singular_values.max();
                let u = svd
                    .solve(b, opts.rank_tol * smax)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let residual = (a * &u - b).norm();
                if strict {
                    let scale = 1.0 + b.norm() + a.norm() * u.norm();
                    if residual > opts.residual_tol * scale {
                        return Err(Error::ResidualTooLarge { t: pt.t, residual });
                    }
                }
                Ok((u.iter().copied().collect(), residual))
            }
            ParityCase::DriftlessOdd | ParityCase::DriftlessEven => {
                let a = pt.decisive(self.case);
                let svd = a.clone().svd(false, true);
                let vt = svd.v_t.expect("requested");
                let (kmin, _) = svd
                    .singular_values
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
                let mut v: Vec<f64> = vt.row(kmin).iter().copied().collect();
                let nrm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                v.iter_mut().for_each(|c| *c /= nrm);
                orient(&mut v, reference);
                let residual = (a * DVector::from_column_slice(&v)).norm();
                Ok((v, residual))
            }
        }
    }

    /// Goh data along a stored extremal.
    pub fn matrices(&self, extremal: &Extremal, rank_tol: f64) -> Result<GohData> {
        let points = (0..extremal.len())
            .map(|k| self.point(extremal.times[k], &extremal.states[k], &extremal.adjoints[k], rank_tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(GohData {
            case: self.case,
            rank_tol,
            points,
        })
    }
}

// Flip `v` towards `reference`, or make its first significant entry positive.
fn orient(v: &mut [f64], reference: Option<&[f64]>) {
    let flip = match reference {
        Some(r) => v.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() < 0.0,
        None => v.iter().find(|c| c.abs() > 1e-10).is_some_and(|c| *c < 0.0),
    };
    if flip {
        v.iter_mut().for_each(|c| *c = -*c);
    }
}

/// `G`, `Ḡ`, `b`, Pfaffian values and (when the parity requires it) `G̃`,
/// `b̃` along an extremal.
pub fn goh_matrices(spec: &SystemSpec, extremal: &Extremal, rank_tol: f64) -> Result<GohData> {
    GohSystem::new(spec)?.matrices(extremal, rank_tol)
}

/// The augmented matrices `G̃(t)`; only defined for odd `m` with drift and
/// even `m` without.
pub fn gtilde(data: &GohData) -> Result<Vec<(DMatrix<f64>, Option<DVector<f64>>)>> {
    if !data.case.augments() {
        return Err(Error::NotAugmenting(match data.case {
            ParityCase::AffineEven => "drift with even m solves G u = b directly",
            _ => "driftless with odd m uses the kernel of G",
        }));
    }
    Ok(data
        .points
        .iter()
        .map(|p| (p.gtilde.clone().expect("augmented"), p.btilde.clone()))
        .collect())
}

/// Control law recovering the singular control from `(x, λ)` at every
/// integrator stage. Kernel directions follow the last accepted point.
pub struct SingularControlLaw<'a> {
    pub goh: &'a GohSystem,
    pub opts: GohOptions,
    reference: Option<Vec<f64>>,
}

impl<'a> SingularControlLaw<'a> {
    pub fn new(goh: &'a GohSystem, opts: GohOptions) -> Self {
        SingularControlLaw {
            goh,
            opts,
            reference: None,
        }
    }
}

impl ControlLaw for SingularControlLaw<'_> {
    fn control(&mut self, t: f64, x: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        let pt = self.goh.point(t, x, lambda, self.opts.rank_tol)?;
        Ok(self.goh.solve_point(&pt, self.reference.as_deref(), &self.opts, false)?.0)
    }

    fn accepted(&mut self, t: f64, x: &[f64], lambda: &[f64]) {
        if let Ok(u) = self.control(t, x, lambda) {
            self.reference = Some(u);
        }
    }

    fn reset(&mut self) {
        self.reference = None;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredControl {
    pub times: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Singular control on the grid of `extremal` (its stored controls are
/// ignored), with rank and residual checks at every point.
pub fn recover_singular_control(goh: &GohSystem, extremal: &Extremal, opts: &GohOptions) -> Result<RecoveredControl> {
    let mut controls: Vec<Vec<f64>> = Vec::with_capacity(extremal.len());
    let mut residuals = Vec::with_capacity(extremal.len());
    for k in 0..extremal.len() {
        let pt = goh.point(extremal.times[k], &extremal.states[k], &extremal.adjoints[k], opts.rank_tol)?;
        let (u, r) = goh.solve_point(&pt, controls.last().map(Vec::as_slice), opts, true)?;
        controls.push(u);
        residuals.push(r);
    }
    Ok(RecoveredControl {
        times: extremal.times.clone(),
        controls,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Allowed fraction of off-`I_dep` grid points failing the rank test.
    pub eps_fraction: f64,
    /// Speed bound on `I_dep` grid points.
    pub stationarity_tol: f64,
    /// Relative bound on `‖G‖_∞` for the Goh verdict.
    pub goh_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            eps_fraction: 0.01,
            stationarity_tol: 1e-6,
            goh_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderVerdict {
    pub minimal_order: bool,
    pub goh: bool,
    /// Set when `m` is too small for the Goh verdict to discriminate.
    pub goh_vacuous: bool,
    pub case: ParityCase,
    pub required_rank: usize,
    /// Fraction of off-`I_dep` grid points meeting the rank requirement.
    pub rank_fraction: f64,
    pub min_rank: usize,
    pub idep_points: usize,
    pub max_speed_on_idep: f64,
    pub stationary_on_idep: bool,
    pub max_goh_norm: f64,
    pub goh_threshold: f64,
    /// Grid points violating the rank inequality between `Ĝ` and `G̃`.
    pub rank_inequality_violations: usize,
}

/// Minimal-order and Goh verdicts for an extremal with its Goh data.
pub fn classify_order(
    sys: &CompiledSystem,
    extremal: &Extremal,
    data: &GohData,
    idep: &IdepSet,
    opts: &ClassifyOptions,
) -> Result<OrderVerdict> {
    let m = sys.m;
    let case = data.case;
    let need = case.required_rank(m);
    let mut off = 0usize;
    let mut good = 0usize;
    let mut min_rank = usize::MAX;
    let mut max_speed: f64 = 0.0;
    let mut max_goh: f64 = 0.0;
    let mut violations = 0;
    let mut scale: f64 = 1.0;
    for (k, pt) in data.points.iter().enumerate() {
        scale = scale.max(extremal.adjoints[k].iter().map(|v| v * v).sum::<f64>().sqrt());
        max_goh = max_goh.max(pt.g.iter().fold(0.0, |a, v| a.max(v.abs())));
        if !pt.rank_inequality_holds(case) {
            violations += 1;
        }
        if idep.contains_index(k) {
            let v = sys.velocity(extremal.times[k], &extremal.states[k], &extremal.controls[k])?;
            max_speed = max_speed.max(v.iter().map(|c| c * c).sum::<f64>().sqrt());
        } else {
            off += 1;
            let r = pt.decisive_rank(case);
            min_rank = min_rank.min(r);
            if r >= need {
                good += 1;
            }
        }
    }
    let rank_fraction = if off == 0 { 1.0 } else { good as f64 / off as f64 };
    let stationary = max_speed <= opts.stationarity_tol;
    let threshold = opts.goh_tol * scale;
    Ok(OrderVerdict {
        minimal_order: stationary && rank_fraction >= 1.0 - opts.eps_fraction,
        goh: max_goh <= threshold,
        goh_vacuous: case.goh_vacuous(m),
        case,
        required_rank: need,
        rank_fraction,
        min_rank: if min_rank == usize::MAX { need } else { min_rank },
        idep_points: idep.indices.len(),
        max_speed_on_idep: max_speed,
        stationary_on_idep: stationary,
        max_goh_norm: max_goh,
        goh_threshold: threshold,
        rank_inequality_violations: violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skew(n: usize, upper: &[f64]) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                a[(i, j)] = upper[k];
                a[(j, i)] = -upper[k];
                k += 1;
            }
        }
        a
    }

    #[test]
    fn pfaffian_examples() {
        assert_eq!(pfaffian(&skew(2, &[3.5])).unwrap(), 3.5);
        let a = skew(4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(pfaffian(&a).unwrap(), 8.0);
        assert!((a.determinant() - 64.0).abs() < 1e-10);
        assert_eq!(pfaffian(&DMatrix::zeros(6, 6)).unwrap(), 0.0);
        assert!(pfaffian(&DMatrix::zeros(3, 3)).is_err());
        let mut bad = a.clone();
        bad[(0, 1)] += 1e-9;
        assert!(pfaffian(&bad).is_err());
    }

    #[test]
    fn pfaffian_partial_matches_finite_difference() {
        let a = skew(4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // Pf = a01 a23 − a02 a13 + a03 a12
        assert_eq!(pfaffian_partial(&a, 0, 1), 6.0);
        assert_eq!(pfaffian_partial(&a, 0, 2), -5.0);
        assert_eq!(pfaffian_partial(&a, 1, 2), 3.0);
    }

    #[test]
    fn parity_dispatch() {
        let m2 = SystemSpec::from_json_str(
            r#"{"dimension": 3, "controls": 2, "driftless": true,
                "fields": [["1","0","0"],["0","1","x1^2/2"]],
                "domain": {"lower": [-1,-1,-1], "upper": [1,1,1]}}"#,
        )
        .unwrap();
        assert_eq!(ParityCase::of(&m2), ParityCase::DriftlessEven);
        assert!(ParityCase::DriftlessEven.goh_vacuous(2));
        assert!(!ParityCase::DriftlessOdd.goh_vacuous(3));
        assert!(!ParityCase::AffineEven.augments());
    }

    #[test]
    fn two_by_two_affine_solve() {
        // G = [[0, h12], [−h12, 0]], b = (−h10, −h20).
        let spec = SystemSpec::from_json_str(
            r#"{"dimension": 3, "controls": 2, "driftless": false,
                "drift": ["x2", "x3", "x1"],
                "fields": [["1","0","0"],["0","1","x1"]],
                "domain": {"lower": [-1,-1,-1], "upper": [1,1,1]}}"#,
        )
        .unwrap();
        let goh = GohSystem::new(&spec).unwrap();
        let pt = goh.point(0.0, &[0.3, 0.2, 0.1], &[0.5, -0.2, 1.0], 1e-8).unwrap();
        let g = &pt.g;
        assert_eq!(g[(0, 0)], 0.0);
        assert_eq!(g[(0, 1)], -g[(1, 0)]);
        let gbar = pt.gbar.as_ref().unwrap();
        let (h12, h10, h20) = (g[(0, 1)], gbar[(1, 0)], gbar[(2, 0)]);
        let (u, _) = goh.solve_point(&pt, None, &GohOptions::default(), true).unwrap();
        assert!((u[0] - h20 / h12).abs() < 1e-12);
        assert!((u[1] + h10 / h12).abs() < 1e-12);
    }
}
