//! Singularity analysis of a trajectory–control pair: linearization, corank
//! and abnormal lifts from the controllability Gramian, the strict
//! abnormality test, stationarity on `I_dep` and the Lie algebra rank
//! condition.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Tape;
use crate::extremal::{integrate_extremal, integrate_state, interpolate_cubic, ControlSignal, Extremal, ExtremalKind};
use crate::goh::{
    classify_order, recover_singular_control, ClassifyOptions, GohData, GohOptions, GohSystem, OrderVerdict,
    SingularControlLaw,
};
use crate::lie::{idep_of_trajectory, lie_bracket, numerical_rank, IdepSet, VectorField, DEFAULT_RANK_TOL};
use crate::ode::{simpson_weights, uniform_grid, OdeOptions};
use crate::system::{CompiledSystem, SystemSpec};

/// Default relative threshold on the singular values of the Gramian factor
/// (`1e-12` on the eigenvalues of `W`).
pub const DEFAULT_CORANK_TOL: f64 = 1e-6;
pub const DEFAULT_STRICT_TOL: f64 = 1e-5;
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub times: Vec<f64>,
    /// `A(t_k) = Df_0 + Σ u_i Df_i`.
    pub a: Vec<DMatrix<f64>>,
    /// `B(t_k) = [f_1 … f_m]`.
    pub b: Vec<DMatrix<f64>>,
    /// `Φ(T, t_k)`.
    pub phi: Vec<DMatrix<f64>>,
    /// Solution of `ṗ = −Aᵀp + ∂L/∂x`, `p(T) = 0`: the inhomogeneous part of
    /// a normal adjoint.
    pub cost_adjoint: Vec<DVector<f64>>,
    /// `W = ∫ Φ(T,t) B Bᵀ Φ(T,t)ᵀ dt`.
    pub gramian: DMatrix<f64>,
    // `√w_k Φ(T,t_k) B(t_k)` side by side; `W = F Fᵀ`.
    factor: DMatrix<f64>,
    /// Largest Simpson defect of `x` against `∫ f(x, u)` (relative).
    pub consistency_residual: f64,
}

fn hermite_mid(x0: &[f64], x1: &[f64], v0: &[f64], v1: &[f64], h: f64) -> Vec<f64> {
    (0..x0.len())
        .map(|i| 0.5 * (x0[i] + x1[i]) + h / 8.0 * (v0[i] - v1[i]))
        .collect()
}

/// Linearizes the dynamics along a sampled pair `(x, u)` on a uniform grid.
pub fn linearize_along(
    sys: &CompiledSystem,
    times: &[f64],
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
    consistency_tol: f64,
) -> Result<Linearization> {
    let len = times.len();
    if len < 3 || states.len() != len || controls.len() != len {
        return Err(Error::InvalidArgument(
            "trajectory, control and grid must share at least 3 points".into(),
        ));
    }
    let n = sys.n;
    let m = sys.m;
    let mut vel = Vec::with_capacity(len);
    let mut a = Vec::with_capacity(len);
    let mut b = Vec::with_capacity(len);
    let mut grad = Vec::with_capacity(len);
    for k in 0..len {
        vel.push(sys.velocity(times[k], &states[k], &controls[k])?);
        a.push(sys.state_jacobian(times[k], &states[k], &controls[k])?);
        b.push(sys.control_matrix(times[k], &states[k])?);
        grad.push(DVector::from_vec(sys.lagrangian_grad(times[k], &states[k], &controls[k])?));
    }

    // Simpson over interval pairs; a trailing odd interval uses the
    // quadratic through its last three nodes.
    let scale = 1.0 + states.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut worst = 0.0f64;
    let mut check = |i0: usize, i1: usize, w: [f64; 3], base: usize| -> Result<()> {
        let h = times[base + 1] - times[base];
        for c in 0..n {
            let integral = h * (w[0] * vel[base][c] + w[1] * vel[base + 1][c] + w[2] * vel[base + 2][c]);
            let defect = (states[i1][c] - states[i0][c] - integral).abs() / scale;
            worst = worst.max(defect);
        }
        if worst > consistency_tol {
            return Err(Error::InconsistentTrajectory { index: i1, residual: worst });
        }
        Ok(())
    };
    let mut k = 0;
    while k + 2 < len {
        check(k, k + 2, [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0], k)?;
        k += 2;
    }
    if k + 1 < len {
        check(k, k + 1, [-1.0 / 12.0, 8.0 / 12.0, 5.0 / 12.0], k - 1)?;
    }

    // Backward RK4 for Ψ(t) = Φ(T, t): Ψ' = −ΨA, and for p.
    let mut phi = vec![DMatrix::identity(n, n); len];
    let mut p = vec![DVector::zeros(n); len];
    for k in (0..len - 1).rev() {
        let h = times[k + 1] - times[k];
        let tm = 0.5 * (times[k] + times[k + 1]);
        let xm = hermite_mid(&states[k], &states[k + 1], &vel[k], &vel[k + 1], h);
        let um = interpolate_cubic(times, controls, tm);
        let am = sys.state_jacobian(tm, &xm, &um)?;
        let gm = DVector::from_vec(sys.lagrangian_grad(tm, &xm, &um)?);
        let f = |psi: &DMatrix<f64>, aa: &DMatrix<f64>| -> DMatrix<f64> { -(psi * aa) };
        let g = |pp: &DVector<f64>, aa: &DMatrix<f64>, gg: &DVector<f64>| -> DVector<f64> { -(aa.transpose() * pp) + gg };
        let psi = &phi[k + 1];
        let k1 = f(psi, &a[k + 1]);
        let k2 = f(&(psi - &k1 * (0.5 * h)), &am);
        let k3 = f(&(psi - &k2 * (0.5 * h)), &am);
        let k4 = f(&(psi - &k3 * h), &a[k]);
        phi[k] = psi - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let pk = &p[k + 1];
        let l1 = g(pk, &a[k + 1], &grad[k + 1]);
        let l2 = g(&(pk - &l1 * (0.5 * h)), &am, &gm);
        let l3 = g(&(pk - &l2 * (0.5 * h)), &am, &gm);
        let l4 = g(&(pk - &l3 * h), &a[k], &grad[k]);
        p[k] = pk - (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
    }

    let w = simpson_weights(len, times[1] - times[0]);
    let mut factor = DMatrix::zeros(n, m * len);
    for k in 0..len {
        let col = &phi[k] * &b[k] * w[k].max(0.0).sqrt();
        factor.view_mut((0, k * m), (n, m)).copy_from(&col);
    }
    let gramian = &factor * factor.transpose();
    Ok(Linearization {
        times: times.to_vec(),
        a,
        b,
        phi,
        cost_adjoint: p,
        gramian,
        factor,
        consistency_residual: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lifts {
    pub corank: usize,
    /// Singular values of the Gramian factor, descending (`√eig W`).
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
    /// Terminal covectors `λ(T)` spanning the left kernel, unit norm.
    pub basis: Vec<Vec<f64>>,
}

/// Corank of the end-point map and a basis of abnormal terminal covectors.
pub fn corank_and_lifts(lin: &Linearization, tol: f64) -> Lifts {
    let n = lin.gramian.nrows();
    // Thin SVD of the n × mK factor: the left vectors span R^n.
    let svd = lin.factor.clone().svd(true, false);
    let uu = svd.u.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let mut basis = Vec::new();
    let mut sv_full = sv.clone();
    sv_full.resize(n, 0.0);
    for (pos, &s) in sv.iter().enumerate() {
        if s <= tol * smax || smax == 0.0 {
            let mut v: Vec<f64> = uu.column(order[pos]).iter().copied().collect();
            if v.iter().find(|c| c.abs() > 1e-10).is_some_and(|c| *c < 0.0) {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            basis.push(v);
        }
    }
    // Fewer singular values than n (only when mK < n) leaves an
    // orthogonal complement that is entirely kernel.
    if sv.len() < n {
        let span = DMatrix::from_fn(n, sv.len(), |i, j| uu[(i, order[j])]);
        let proj = DMatrix::identity(n, n) - &span * span.transpose();
        let q = proj.svd(true, false);
        let qu = q.u.expect("requested");
        for (j, s) in q.singular_values.iter().enumerate() {
            if *s > 0.5 {
                basis.push(qu.column(j).iter().copied().collect());
            }
        }
    }
    Lifts {
        corank: basis.len(),
        singular_values: sv_full,
        tolerance: tol,
        basis,
    }
}

/// `λ(t_k) = Φ(T, t_k)ᵀ λ(T)`.
pub fn lift_adjoint(lin: &Linearization, lambda_t: &[f64]) -> Vec<Vec<f64>> {
    let l = DVector::from_column_slice(lambda_t);
    lin.phi.iter().map(|p| (p.transpose() * &l).iter().copied().collect()).collect()
}

/// Abnormal extremal assembled from a lift of a given pair.
pub fn lifted_extremal(lin: &Linearization, states: &[Vec<f64>], controls: &[Vec<f64>], lambda_t: &[f64]) -> Extremal {
    Extremal {
        times: lin.times.clone(),
        states: states.to_vec(),
        adjoints: lift_adjoint(lin, lambda_t),
        multiplier: 0.0,
        controls: controls.to_vec(),
        kind: ExtremalKind::Abnormal,
        energy_drift: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbnormalCheck {
    /// `max_i sup_t |h_i(t)|`, `i ≥ 1`.
    pub max_h: f64,
    /// `sup_t |h_0(t) − h_0(0)|` (zero for driftless systems).
    pub h0_drift: f64,
}

/// Conservation laws of abnormal extremals, measured on the grid.
pub fn abnormal_check(sys: &CompiledSystem, extremal: &Extremal) -> Result<AbnormalCheck> {
    let mut max_h = 0.0f64;
    let mut h0_first = None;
    let mut h0_drift = 0.0f64;
    for k in 0..extremal.len() {
        let f = sys.field_matrix(extremal.times[k], &extremal.states[k])?;
        let h = f.transpose() * DVector::from_column_slice(&extremal.adjoints[k]);
        for i in 1..h.len() {
            max_h = max_h.max(h[i].abs());
        }
        let h0 = if sys.driftless { 0.0 } else { h[0] };
        let first = *h0_first.get_or_insert(h0);
        h0_drift = h0_drift.max((h0 - first).abs());
    }
    Ok(AbnormalCheck { max_h, h0_drift })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strictness {
    pub strict: bool,
    /// RMS of `U u + α − Bᵀλ` over the samples at the best `λ(T)`.
    pub residual: f64,
    pub threshold: f64,
    /// Ratio of extreme nonzero singular values of the least-squares matrix.
    pub condition: f64,
    pub samples: usize,
    /// Normal lift found when not strict.
    pub witness_lambda0: Option<Vec<f64>>,
    pub witness_lambda_t: Option<Vec<f64>>,
}

/// Searches for a normal lift (`λ⁰ = −1`) of the pair `(x, u)`.
///
/// The normal adjoint is affine in `λ(T)`: `λ(t) = Φ(T,t)ᵀλ(T) + p(t)`, and
/// the stationarity condition `U u + α = Bᵀλ` sampled in time gives a linear
/// least-squares problem solved by SVD.
pub fn strictness_test(
    sys: &CompiledSystem,
    lin: &Linearization,
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
    samples: Option<usize>,
    strict_tol: f64,
) -> Result<Strictness> {
    let len = lin.times.len();
    let n = sys.n;
    let m = sys.m;
    let count = samples.unwrap_or(len).clamp(1, len);
    let picks: Vec<usize> = if count == len {
        (0..len).collect()
    } else if count == 1 {
        vec![len / 2]
    } else {
        (0..count).map(|s| s * (len - 1) / (count - 1)).collect()
    };
    let mut mat = DMatrix::zeros(m * picks.len(), n);
    let mut rhs = DVector::zeros(m * picks.len());
    let mut scale = 1.0f64;
    for (r, &k) in picks.iter().enumerate() {
        let t = lin.times[k];
        let (w, alpha, _) = sys.weight(t, &states[k])?;
        let target = &w * DVector::from_column_slice(&controls[k]) + alpha;
        scale = scale.max(target.amax());
        let bt = lin.b[k].transpose();
        let rows = &bt * lin.phi[k].transpose();
        mat.view_mut((r * m, 0), (m, n)).copy_from(&rows);
        rhs.rows_mut(r * m, m).copy_from(&(target - &bt * &lin.cost_adjoint[k]));
    }
    let svd = mat.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-12 * smax;
    let lam_t = svd.solve(&rhs, eps).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let smin = svd.singular_values.iter().copied().filter(|s| *s > eps).fold(f64::INFINITY, f64::min);
    let residual = ((&mat * &lam_t - &rhs).norm_squared() / rhs.len() as f64).sqrt();
    let threshold = strict_tol * scale;
    let strict = residual > threshold;
    let witness = (!strict).then(|| {
        let l0 = lin.phi[0].transpose() * &lam_t + &lin.cost_adjoint[0];
        (l0.iter().copied().collect(), lam_t.iter().copied().collect())
    });
    let (witness_lambda0, witness_lambda_t) = match witness {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    Ok(Strictness {
        strict,
        residual,
        threshold,
        condition: if smin.is_finite() && smin > 0.0 { smax / smin } else { f64::INFINITY },
        samples: picks.len(),
        witness_lambda0,
        witness_lambda_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stationarity {
    pub pass: bool,
    pub max_speed: f64,
    pub points: usize,
    /// Fraction of `I_dep` grid points with speed within tolerance.
    pub fraction: f64,
    pub tolerance: f64,
}

/// Speed `‖f_0 + Σ u_i f_i‖` on `I_dep` grid points; passes when at least
/// 99% of them are within `tol`.
pub fn verify_idep_stationarity(
    sys: &CompiledSystem,
    times: &[f64],
    states: &[Vec<f64>],
    controls: &[Vec<f64>],
    idep: &IdepSet,
    tol: f64,
) -> Result<Stationarity> {
    let mut max_speed = 0.0f64;
    let mut ok = 0usize;
    for &k in &idep.indices {
        let v = sys.velocity(times[k], &states[k], &controls[k])?;
        let s = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        max_speed = max_speed.max(s);
        if s <= tol {
            ok += 1;
        }
    }
    let points = idep.indices.len();
    let fraction = if points == 0 { 1.0 } else { ok as f64 / points as f64 };
    Ok(Stationarity {
        pass: fraction >= 0.99,
        max_speed,
        points,
        fraction,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LarcResult {
    pub holds: bool,
    /// Shortest bracket length reaching full rank at every sample point.
    pub length: Option<usize>,
    pub failing_point: Option<Vec<f64>>,
    pub rank_at_failure: Option<usize>,
    /// A negative answer is only a statement about lengths up to the bound.
    pub inconclusive: bool,
    pub brackets_used: usize,
}

/// Checks whether brackets of length at most `max_len` span `R^n` at every
/// sample point.
pub fn larc_check(spec: &SystemSpec, points: &[Vec<f64>], max_len: usize, tol: f64) -> Result<LarcResult> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("bracket length bound must be at least 1".into()));
    }
    let n = spec.n;
    let alphabet: Vec<VectorField> = spec.rank_family();
    let mut all: Vec<VectorField> = alphabet.iter().filter(|f| !f.is_identically_zero()).cloned().collect();
    let mut level = all.clone();
    let mut worst: Option<(Vec<f64>, usize)> = None;
    for len in 1..=max_len {
        if len > 1 {
            let mut next = Vec::new();
            for f in &level {
                for g in &alphabet {
                    let b = lie_bracket(f, g)?;
                    if !b.is_identically_zero() {
                        next.push(b);
                    }
                }
            }
            all.extend(next.iter().cloned());
            level = next;
        }
        let tape = Tape::compile(&all.iter().flat_map(|f| f.components().iter().cloned()).collect::<Vec<_>>());
        worst = None;
        for p in points {
            let v = tape.eval(0.0, p)?;
            let mat = DMatrix::from_column_slice(n, all.len(), &v);
            let r = numerical_rank(&mat, tol);
            if r < n && worst.as_ref().is_none_or(|(_, wr)| r < *wr) {
                worst = Some((p.clone(), r));
            }
        }
        if worst.is_none() {
            return Ok(LarcResult {
                holds: true,
                length: Some(len),
                failing_point: None,
                rank_at_failure: None,
                inconclusive: false,
                brackets_used: all.len(),
            });
        }
        if level.is_empty() {
            break;
        }
    }
    let (p, r) = worst.expect("failure recorded");
    Ok(LarcResult {
        holds: false,
        length: None,
        failing_point: Some(p),
        rank_at_failure: Some(r),
        inconclusive: !level.is_empty(),
        brackets_used: all.len(),
    })
}

/// What is analyzed: an abnormal extremal started from a covector, or the
/// trajectory of a given control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Abnormal { x0: Vec<f64>, lambda0: Vec<f64> },
    Control { x0: Vec<f64>, control: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub horizon: f64,
    pub intervals: usize,
    pub ode: OdeOptions,
    pub goh: GohOptions,
    pub classify: ClassifyOptions,
    pub corank_tol: f64,
    pub strict_tol: f64,
    pub strict_samples: Option<usize>,
    pub consistency_tol: f64,
    pub idep_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            horizon: 1.0,
            intervals: 200,
            ode: OdeOptions::adaptive(1e-11, 1e-11),
            goh: GohOptions::default(),
            classify: ClassifyOptions::default(),
            corank_tol: DEFAULT_CORANK_TOL,
            strict_tol: DEFAULT_STRICT_TOL,
            strict_samples: None,
            consistency_tol: DEFAULT_CONSISTENCY_TOL,
            idep_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub singular: bool,
    pub corank: usize,
    pub singular_values: Vec<f64>,
    pub lift_basis: Vec<Vec<f64>>,
    /// Conservation laws along the abnormal extremal used for the Goh data.
    pub abnormal_check: Option<AbnormalCheck>,
    pub order: Option<OrderVerdict>,
    /// `max_t ‖u(t)‖_∞` of the control recovered from the Goh data.
    pub recovered_control_sup: Option<f64>,
    pub recovery_error: Option<String>,
    pub strictness: Strictness,
    pub idep: IdepSet,
    pub stationarity: Stationarity,
    /// Set when `I_dep` is nonempty: the control of the trajectory is then
    /// not unique and the corank refers to the supplied one.
    pub control_non_unique: bool,
    pub consistency_residual: f64,
    pub options: AnalysisOptions,
    #[serde(skip)]
    pub extremal: Option<Extremal>,
    #[serde(skip)]
    pub goh_data: Option<GohData>,
}

/// Full singularity report for one subject.
pub fn analyze(spec: &SystemSpec, subject: &Subject, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let sys = spec.compile();
    let goh = GohSystem::new(spec)?;
    let times = uniform_grid(opts.horizon, opts.intervals);
    let (states, controls, abnormal) = match subject {
        Subject::Abnormal { x0, lambda0 } => {
            let mut law = SingularControlLaw::new(&goh, opts.goh);
            let e = integrate_extremal(
                spec,
                &sys,
                x0,
                lambda0,
                0.0,
                opts.horizon,
                opts.intervals,
                Some(&mut law),
                &opts.ode,
            )?;
            (e.states.clone(), e.controls.clone(), Some(e))
        }
        Subject::Control { x0, control } => {
            if control.len() != spec.m {
                return Err(Error::DimensionMismatch {
                    expected: spec.m,
                    found: control.len(),
                    what: "control",
                });
            }
            let signal = ControlSignal::constant(times.clone(), control.clone());
            let states = integrate_state(&sys, x0, &signal, &opts.ode)?;
            (states, signal.values, None)
        }
    };
    let lin = linearize_along(&sys, &times, &states, &controls, opts.consistency_tol)?;
    let lifts = corank_and_lifts(&lin, opts.corank_tol);
    let idep = idep_of_trajectory(spec, &times, &states, opts.idep_tol)?;
    let stationarity =
        verify_idep_stationarity(&sys, &times, &states, &controls, &idep, opts.classify.stationarity_tol)?;
    let strictness = strictness_test(&sys, &lin, &states, &controls, opts.strict_samples, opts.strict_tol)?;
    let extremal = match abnormal {
        Some(e) => Some(e),
        None => lifts
            .basis
            .first()
            .map(|l| lifted_extremal(&lin, &states, &controls, l)),
    };
    let (mut order, mut abn, mut sup, mut rec_err, mut data) = (None, None, None, None, None);
    if let Some(e) = &extremal {
        let d = goh.matrices(e, opts.goh.rank_tol)?;
        order = Some(classify_order(&sys, e, &d, &idep, &opts.classify)?);
        abn = Some(abnormal_check(&sys, e)?);
        match recover_singular_control(&goh, e, &opts.goh) {
            Ok(r) => {
                sup = Some(r.controls.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())));
            }
            Err(err) => rec_err = Some(err.to_string()),
        }
        data = Some(d);
    }
    Ok(AnalysisReport {
        singular: lifts.corank >= 1,
        corank: lifts.corank,
        singular_values: lifts.singular_values,
        lift_basis: lifts.basis,
        abnormal_check: abn,
        order,
        recovered_control_sup: sup,
        recovery_error: rec_err,
        strictness,
        control_non_unique: !idep.is_empty(),
        idep,
        stationarity,
        consistency_residual: lin.consistency_residual,
        options: *opts,
        extremal,
        goh_data: data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> SystemSpec {
        SystemSpec::from_json_str(text).unwrap()
    }

    #[test]
    fn fully_actuated_is_not_singular() {
        let s = spec(
            r#"{"dimension": 2, "controls": 2, "driftless": true,
                "fields": [["1","0"],["0","1"]],
                "domain": {"lower": [-1,-1], "upper": [1,1]}}"#,
        );
        let times = uniform_grid(1.0, 20);
        let states: Vec<Vec<f64>> = times.iter().map(|t| vec![*t, 0.0]).collect();
        let controls = vec![vec![1.0, 0.0]; times.len()];
        let lin = linearize_along(&s.compile(), &times, &states, &controls, 1e-6).unwrap();
        let l = corank_and_lifts(&lin, DEFAULT_CORANK_TOL);
        assert_eq!(l.corank, 0);
        assert!(l.basis.is_empty());
    }

    #[test]
    fn inconsistent_pair_is_rejected() {
        let s = spec(
            r#"{"dimension": 2, "controls": 2, "driftless": true,
                "fields": [["1","0"],["0","1"]],
                "domain": {"lower": [-1,-1], "upper": [1,1]}}"#,
        );
        let times = uniform_grid(1.0, 20);
        let states: Vec<Vec<f64>> = times.iter().map(|t| vec![*t, 0.0]).collect();
        let controls = vec![vec![0.0, 1.0]; times.len()];
        assert!(matches!(
            linearize_along(&s.compile(), &times, &states, &controls, 1e-6),
            Err(Error::InconsistentTrajectory { .. })
        ));
    }

    #[test]
    fn larc_examples() {
        let martinet = spec(
            r#"{"dimension": 3, "controls": 2, "driftless": true,
                "fields": [["1","0","0"],["0","1","x1^2/2"]],
                "domain": {"lower": [-1,-1,-1], "upper": [1,1,1]}}"#,
        );
        let pts = vec![vec![0.0, 0.0, 0.0], vec![0.5, 0.1, -0.3]];
        let r = larc_check(&martinet, &pts, 3, 1e-8).unwrap();
        assert!(r.holds);
        assert_eq!(r.length, Some(3));
        let r2 = larc_check(&martinet, &pts, 2, 1e-8).unwrap();
        assert!(!r2.holds && r2.inconclusive);
        assert_eq!(r2.failing_point, Some(vec![0.0, 0.0, 0.0]));
        let line = spec(
            r#"{"dimension": 2, "controls": 1, "driftless": true,
                "fields": [["1","0"]],
                "domain": {"lower": [-1,-1], "upper": [1,1]}}"#,
        );
        let r3 = larc_check(&line, &pts.iter().map(|p| p[..2].to_vec()).collect::<Vec<_>>(), 4, 1e-8).unwrap();
        assert!(!r3.holds);
        assert!(!r3.inconclusive);
    }

    #[test]
    fn stationarity_examples() {
        let s = spec(
            r#"{"dimension": 2, "controls": 1, "driftless": false,
                "drift": ["x1", "0"], "fields": [["0","x1"]],
                "domain": {"lower": [-1,-1], "upper": [1,1]}}"#,
        );
        let sys = s.compile();
        let times = uniform_grid(1.0, 10);
        let states = vec![vec![0.0, 0.3]; times.len()];
        let controls = vec![vec![2.0]; times.len()];
        let idep = idep_of_trajectory(&s, &times, &states, 1e-8).unwrap();
        assert_eq!(idep.intervals, vec![(0.0, 1.0)]);
        let st = verify_idep_stationarity(&sys, &times, &states, &controls, &idep, 1e-9).unwrap();
        assert!(st.pass && st.max_speed == 0.0);
        let empty = IdepSet { intervals: vec![], tolerance: 1e-8, indices: vec![] };
        assert!(verify_idep_stationarity(&sys, &times, &states, &controls, &empty, 1e-9).unwrap().pass);
    }
}
