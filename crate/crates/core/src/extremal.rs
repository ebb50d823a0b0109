//! Pontryagin extremals: the canonical system in `(x, λ)` with the control
//! supplied either by the normal feedback or by an external law.
//!
//! With `L = ½ uᵀU(x)u + α(x)ᵀu + ½ g(t, x)` the Hamiltonian is
//! `H = <λ, f_0 + Σ u_i f_i> + λ⁰ L` and the canonical equations read
//! `ẋ = f_0 + Σ u_i f_i`, `λ̇ = −A(x, u)ᵀλ − λ⁰ ∂L/∂x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::bracket_multiindex;
use crate::ode::{self, OdeOptions};
use crate::system::{CompiledSystem, PointEval, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalKind {
    Normal,
    Abnormal,
    BothCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremal {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub adjoints: Vec<Vec<f64>>,
    /// `λ⁰ ∈ {0, −1}`.
    pub multiplier: f64,
    pub controls: Vec<Vec<f64>>,
    pub kind: ExtremalKind,
    /// `|H(T) − H(0)|`, only for autonomous data.
    pub energy_drift: Option<f64>,
}

impl Extremal {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Sum of chord lengths of the state path.
    pub fn path_length(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .sum()
    }
}

/// Source of the control along an integration.
pub trait ControlLaw {
    fn control(&mut self, t: f64, x: &[f64], lambda: &[f64]) -> Result<Vec<f64>>;

    /// Notified at every accepted integration point.
    fn accepted(&mut self, _t: f64, _x: &[f64], _lambda: &[f64]) {}

    /// Forget any state carried along a previous pass.
    fn reset(&mut self) {}
}

/// `u = U(x)⁻¹ (h − α(x))` with `h_i = <λ, f_i(x)>`.
pub struct NormalLaw<'a> {
    pub sys: &'a CompiledSystem,
}

impl ControlLaw for NormalLaw<'_> {
    fn control(&mut self, t: f64, x: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        let h = self.sys.control_matrix(t, x)?.transpose() * DVector::from_column_slice(lambda);
        normal_control(self.sys, t, x, h.as_slice())
    }
}

/// A sampled control signal, interpolated by local cubics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ControlSignal {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        ControlSignal { times, values }
    }

    pub fn constant(times: Vec<f64>, value: Vec<f64>) -> Self {
        let values = vec![value; times.len()];
        ControlSignal { times, values }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        interpolate_cubic(&self.times, &self.values, t)
    }
}

impl ControlLaw for ControlSignal {
    fn control(&mut self, t: f64, _x: &[f64], _lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self.at(t))
    }
}

/// Lagrange cubic through the four grid nodes around `t` (clamped at the ends).
pub fn interpolate_cubic(times: &[f64], values: &[Vec<f64>], t: f64) -> Vec<f64> {
    let len = times.len();
    if len == 1 {
        return values[0].clone();
    }
    let k = match times.partition_point(|&s| s <= t) {
        0 => 0,
        p => (p - 1).min(len - 2),
    };
    let (lo, hi) = if len < 4 {
        (0, len - 1)
    } else {
        let lo = k.saturating_sub(1).min(len - 4);
        (lo, lo + 3)
    };
    let mut out = vec![0.0; values[0].len()];
    for a in lo..=hi {
        let mut w = 1.0;
        for b in lo..=hi {
            if a != b {
                w *= (t - times[b]) / (times[a] - times[b]);
            }
        }
        for (o, v) in out.iter_mut().zip(&values[a]) {
            *o += w * v;
        }
    }
    out
}

/// `H = <λ, f_0> + Σ u_i <λ, f_i> + λ⁰ (½ uᵀUu + αᵀu + ½ g)`.
pub fn hamiltonian(
    sys: &CompiledSystem,
    t: f64,
    x: &[f64],
    lambda: &[f64],
    multiplier: f64,
    u: &[f64],
) -> Result<f64> {
    let v = sys.velocity(t, x, u)?;
    let pairing: f64 = lambda.iter().zip(&v).map(|(a, b)| a * b).sum();
    if multiplier == 0.0 {
        return Ok(pairing);
    }
    Ok(pairing + multiplier * sys.lagrangian(t, x, u)?)
}

/// Normal feedback `u = U(x)⁻¹ (h − α(x))`.
pub fn normal_control(sys: &CompiledSystem, t: f64, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let (w, alpha, _) = sys.weight(t, x)?;
    let rhs = DVector::from_column_slice(h) - alpha;
    let chol = w.clone().cholesky().ok_or_else(|| Error::WeightNotPositive {
        point: x.to_vec(),
        min_eigenvalue: w.symmetric_eigenvalues().min(),
    })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Canonical right-hand side for the stacked state `(x, λ)`.
pub fn canonical_rhs(
    sys: &CompiledSystem,
    multiplier: f64,
    t: f64,
    x: &[f64],
    lambda: &[f64],
    u: &[f64],
    dy: &mut [f64],
) -> Result<()> {
    let n = sys.n;
    let mut pe = sys.point_eval();
    sys.eval_point(t, x, &mut pe)?;
    pe.velocity(u, &mut dy[..n]);
    pe.adjoint_rate(u, lambda, multiplier, &mut dy[n..]);
    Ok(())
}

fn is_autonomous(spec: &SystemSpec) -> bool {
    let fields = spec.family();
    let time_in_fields = fields
        .iter()
        .any(|f| f.components().iter().any(|e| e.depends_on_time()));
    let c = &spec.cost;
    let time_in_cost = c.g.depends_on_time()
        || c.alpha.iter().any(|e| e.depends_on_time())
        || c.weight.iter().flatten().any(|e| e.depends_on_time());
    !(time_in_fields || time_in_cost)
}

/// Integrates the canonical system on the uniform grid `t_k = kT/K`.
///
/// With `multiplier = −1` and no law the normal feedback is used; abnormal
/// extremals (`multiplier = 0`) need an explicit control law.
#[allow(clippy::too_many_arguments)]
pub fn integrate_extremal(
    spec: &SystemSpec,
    sys: &CompiledSystem,
    x0: &[f64],
    lambda0: &[f64],
    multiplier: f64,
    horizon: f64,
    intervals: usize,
    law: Option<&mut dyn ControlLaw>,
    opts: &OdeOptions,
) -> Result<Extremal> {
    let n = sys.n;
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x0.len(), what: "initial state" });
    }
    if lambda0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: lambda0.len(), what: "initial covector" });
    }
    if multiplier != 0.0 && multiplier != -1.0 {
        return Err(Error::InvalidArgument(format!("multiplier must be 0 or -1, got {multiplier}")));
    }
    if intervals < 2 || horizon <= 0.0 {
        return Err(Error::InvalidArgument("need at least 2 grid intervals and a positive horizon".into()));
    }
    let mut normal = NormalLaw { sys };
    let fused_normal = law.is_none();
    let law: &mut dyn ControlLaw = match law {
        Some(l) => l,
        None if multiplier == -1.0 => &mut normal,
        None => {
            return Err(Error::InvalidArgument(
                "abnormal extremals need a control law".into(),
            ))
        }
    };
    law.reset();
    let times = ode::uniform_grid(horizon, intervals);
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(lambda0);

    struct Canonical<'a, 'b> {
        sys: &'a CompiledSystem,
        law: &'b mut dyn ControlLaw,
        multiplier: f64,
        fused_normal: bool,
        pe: PointEval,
        h: Vec<f64>,
        chol: Vec<f64>,
    }
    impl ode::Rhs for Canonical<'_, '_> {
        fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            let n = self.sys.n;
            let (x, l) = y.split_at(n);
            if self.fused_normal {
                self.sys.eval_point(t, x, &mut self.pe)?;
                let m = self.sys.m;
                self.h.resize(m + 1, 0.0);
                self.pe.pairings(l, &mut self.h);
                self.h.remove(0);
                if !self.pe.normal_control_in_place(&mut self.h, &mut self.chol) {
                    // Falls back to the allocating path for its error report.
                    let u = self.law.control(t, x, l)?;
                    self.h.copy_from_slice(&u);
                }
            } else {
                let u = self.law.control(t, x, l)?;
                self.sys.eval_point(t, x, &mut self.pe)?;
                self.h.clear();
                self.h.extend_from_slice(&u);
            }
            let (dx, dl) = dy.split_at_mut(n);
            self.pe.velocity(&self.h, dx);
            self.pe.adjoint_rate(&self.h, l, self.multiplier, dl);
            Ok(())
        }
        fn accepted(&mut self, t: f64, y: &[f64]) {
            let n = self.sys.n;
            self.law.accepted(t, &y[..n], &y[n..]);
        }
    }

    let ys = {
        let mut rhs = Canonical {
            sys,
            law: &mut *law,
            multiplier,
            fused_normal,
            pe: sys.point_eval(),
            h: Vec::with_capacity(sys.m + 1),
            chol: vec![0.0; sys.m * sys.m],
        };
        ode::integrate(&mut rhs, &y0, &times, opts)?
    };
    let states: Vec<Vec<f64>> = ys.iter().map(|y| y[..n].to_vec()).collect();
    let adjoints: Vec<Vec<f64>> = ys.iter().map(|y| y[n..].to_vec()).collect();
    law.reset();
    let mut controls = Vec::with_capacity(times.len());
    for ((t, x), l) in times.iter().zip(&states).zip(&adjoints) {
        controls.push(law.control(*t, x, l)?);
        law.accepted(*t, x, l);
    }
    let energy_drift = if is_autonomous(spec) {
        let h0 = hamiltonian(sys, times[0], &states[0], &adjoints[0], multiplier, &controls[0])?;
        let k = times.len() - 1;
        let h1 = hamiltonian(sys, times[k], &states[k], &adjoints[k], multiplier, &controls[k])?;
        Some((h1 - h0).abs())
    } else {
        None
    };
    Ok(Extremal {
        times,
        states,
        adjoints,
        multiplier,
        controls,
        kind: if multiplier == 0.0 { ExtremalKind::Abnormal } else { ExtremalKind::Normal },
        energy_drift,
    })
}

/// Integrates the state alone under a given control signal.
pub fn integrate_state(
    sys: &CompiledSystem,
    x0: &[f64],
    control: &ControlSignal,
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>> {
    let mut rhs = |t: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        dx.copy_from_slice(&sys.velocity(t, x, &control.at(t))?);
        Ok(())
    };
    Ok(ode::integrate(&mut rhs, x0, &control.times, opts)?)
}

/// `h_L(t_k) = <λ(t_k), f_L(x(t_k))>` for each multi-index `L`.
pub fn h_functions(spec: &SystemSpec, extremal: &Extremal, indices: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
    let family = spec.family();
    let fields = indices
        .iter()
        .map(|l| bracket_multiindex(&family, l))
        .collect::<Result<Vec<_>>>()?;
    let tape = crate::expr::Tape::compile(
        &fields.iter().flat_map(|f| f.components().iter().cloned()).collect::<Vec<_>>(),
    );
    let n = spec.n;
    let mut out = vec![Vec::with_capacity(extremal.len()); indices.len()];
    let mut scratch = Vec::new();
    let mut buf = vec![0.0; n * fields.len()];
    for k in 0..extremal.len() {
        tape.eval_into(extremal.times[k], &extremal.states[k], &mut scratch, &mut buf)?;
        for (j, o) in out.iter_mut().enumerate() {
            o.push(
                buf[j * n..(j + 1) * n]
                    .iter()
                    .zip(&extremal.adjoints[k])
                    .map(|(a, b)| a * b)
                    .sum(),
            );
        }
    }
    Ok(out)
}

/// `∂H/∂u = h − U u − α` for a normal extremal; zero along exact solutions.
pub fn control_gradient(sys: &CompiledSystem, t: f64, x: &[f64], lambda: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let b: DMatrix<f64> = sys.control_matrix(t, x)?;
    let h = b.transpose() * DVector::from_column_slice(lambda);
    let (w, alpha, _) = sys.weight(t, x)?;
    let r = h - w * DVector::from_column_slice(u) - alpha;
    Ok(r.iter().copied().collect())
}
