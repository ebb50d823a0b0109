//! System specifications: vector fields, quadratic cost data and a sampling
//! box, loaded from and written to a small JSON format.
//!
//! ```json
//! {
//!   "dimension": 2, "controls": 1, "driftless": false,
//!   "drift": ["1 + x2^2", "0"],
//!   "fields": [["0", "1"]],
//!   "cost": { "U": [["2"]], "alpha": ["0"], "g": "0" },
//!   "domain": { "lower": [-1, -1], "upper": [2, 1] }
//! }
//! ```
//!
//! The running cost is `½ uᵀU(x)u + α(x)ᵀu + ½ g(t, x)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, DomainError, Expr, Tape};
use crate::lie::VectorField;

#[derive(Debug, Clone)]
pub struct CostSpec {
    /// `m × m`, symmetric.
    pub weight: Vec<Vec<Expr>>,
    pub alpha: Vec<Expr>,
    pub g: Expr,
}

impl CostSpec {
    /// `U = I`, `α = 0`, `g = 0`.
    pub fn identity(m: usize) -> Self {
        CostSpec {
            weight: (0..m)
                .map(|i| (0..m).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect())
                .collect(),
            alpha: vec![Expr::zero(); m],
            g: Expr::zero(),
        }
    }

    /// Multiplies `U`, `α` and `g` by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        CostSpec {
            weight: self
                .weight
                .iter()
                .map(|row| row.iter().map(|e| e.scale(c)).collect())
                .collect(),
            alpha: self.alpha.iter().map(|e| e.scale(c)).collect(),
            g: self.g.scale(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: Option<String>,
    pub description: Option<String>,
    pub n: usize,
    pub m: usize,
    pub driftless: bool,
    /// Present iff the system is not driftless.
    pub drift: Option<VectorField>,
    pub controls: Vec<VectorField>,
    pub cost: CostSpec,
    pub domain: Domain,
}

fn spec_err(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Spec {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| spec_err(at, format!("missing required field \"{key}\"")))
}

fn as_usize(v: &Value, at: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| spec_err(at, "expected a non-negative integer"))
}

fn as_array<'a>(v: &'a Value, at: &str, len: Option<usize>) -> Result<&'a Vec<Value>> {
    let a = v.as_array().ok_or_else(|| spec_err(at, "expected an array"))?;
    if let Some(l) = len {
        if a.len() != l {
            return Err(spec_err(at, format!("expected {l} entries, found {}", a.len())));
        }
    }
    Ok(a)
}

fn as_expr(v: &Value, at: &str, n: usize) -> Result<Expr> {
    match v {
        Value::String(s) => parse_expression(s, n).map_err(|source| Error::Expression {
            pointer: at.to_string(),
            source,
        }),
        Value::Number(num) => num
            .as_f64()
            .map(Expr::constant)
            .ok_or_else(|| spec_err(at, "number out of range")),
        _ => Err(spec_err(at, "expected an expression string")),
    }
}

fn expr_vec(v: &Value, at: &str, n: usize, len: usize) -> Result<Vec<Expr>> {
    as_array(v, at, Some(len))?
        .iter()
        .enumerate()
        .map(|(i, e)| as_expr(e, &format!("{at}/{i}"), n))
        .collect()
}

fn num_vec(v: &Value, at: &str, len: usize) -> Result<Vec<f64>> {
    as_array(v, at, Some(len))?
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.as_f64()
                .ok_or_else(|| spec_err(format!("{at}/{i}"), "expected a number"))
        })
        .collect()
}

impl SystemSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        SystemSpec::from_json(&v)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        SystemSpec::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| spec_err("", "expected a JSON object"))?;
        const KNOWN: [&str; 9] = [
            "name",
            "description",
            "dimension",
            "controls",
            "driftless",
            "drift",
            "fields",
            "cost",
            "domain",
        ];
        if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(spec_err(format!("/{k}"), "unknown field"));
        }
        let n = as_usize(get(obj, "dimension", "")?, "/dimension")?;
        let m = as_usize(get(obj, "controls", "")?, "/controls")?;
        let driftless = get(obj, "driftless", "")?
            .as_bool()
            .ok_or_else(|| spec_err("/driftless", "expected a boolean"))?;
        if n == 0 {
            return Err(spec_err("/dimension", "dimension must be at least 1"));
        }
        if m == 0 || m > n || (!driftless && m >= n) {
            let bound = if driftless { "1 <= m <= n" } else { "1 <= m < n" };
            return Err(spec_err("/controls", format!("control count {m} violates {bound} (n = {n})")));
        }
        let drift = match (driftless, obj.get("drift")) {
            (false, Some(d)) => Some(VectorField::new(expr_vec(d, "/drift", n, n)?)),
            (false, None) => return Err(spec_err("", "missing required field \"drift\" (system is not driftless)")),
            (true, Some(_)) => return Err(spec_err("/drift", "driftless systems must not declare a drift")),
            (true, None) => None,
        };
        let fields_v = as_array(get(obj, "fields", "")?, "/fields", Some(m))?;
        let controls = fields_v
            .iter()
            .enumerate()
            .map(|(i, f)| Ok(VectorField::new(expr_vec(f, &format!("/fields/{i}"), n, n)?)))
            .collect::<Result<Vec<_>>>()?;
        let cost = match obj.get("cost") {
            None => CostSpec::identity(m),
            Some(c) => {
                let co = c.as_object().ok_or_else(|| spec_err("/cost", "expected an object"))?;
                if let Some(k) = co.keys().find(|k| !["U", "alpha", "g"].contains(&k.as_str())) {
                    return Err(spec_err(format!("/cost/{k}"), "unknown field"));
                }
                let weight = match co.get("U") {
                    None => CostSpec::identity(m).weight,
                    Some(u) => as_array(u, "/cost/U", Some(m))?
                        .iter()
                        .enumerate()
                        .map(|(i, row)| expr_vec(row, &format!("/cost/U/{i}"), n, m))
                        .collect::<Result<Vec<_>>>()?,
                };
                let alpha = match co.get("alpha") {
                    None => vec![Expr::zero(); m],
                    Some(a) => expr_vec(a, "/cost/alpha", n, m)?,
                };
                let g = match co.get("g") {
                    None => Expr::zero(),
                    Some(g) => as_expr(g, "/cost/g", n)?,
                };
                CostSpec { weight, alpha, g }
            }
        };
        let dom = get(obj, "domain", "")?
            .as_object()
            .ok_or_else(|| spec_err("/domain", "expected an object"))?;
        let lower = num_vec(get(dom, "lower", "/domain")?, "/domain/lower", n)?;
        let upper = num_vec(get(dom, "upper", "/domain")?, "/domain/upper", n)?;
        if let Some(i) = (0..n).find(|&i| lower[i] >= upper[i]) {
            return Err(spec_err(format!("/domain/upper/{i}"), "upper bound must exceed lower bound"));
        }
        let spec = SystemSpec {
            name: obj.get("name").and_then(Value::as_str).map(str::to_string),
            description: obj.get("description").and_then(Value::as_str).map(str::to_string),
            n,
            m,
            driftless,
            drift,
            controls,
            cost,
            domain: Domain { lower, upper },
        };
        spec.check_weight(&spec.sample_points(32, 0))?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Value {
        let strs = |f: &VectorField| -> Vec<String> { f.components().iter().map(|e| e.to_string()).collect() };
        let mut obj = Map::new();
        if let Some(name) = &self.name {
            obj.insert("name".into(), json!(name));
        }
        if let Some(d) = &self.description {
            obj.insert("description".into(), json!(d));
        }
        obj.insert("dimension".into(), json!(self.n));
        obj.insert("controls".into(), json!(self.m));
        obj.insert("driftless".into(), json!(self.driftless));
        if let Some(d) = &self.drift {
            obj.insert("drift".into(), json!(strs(d)));
        }
        obj.insert(
            "fields".into(),
            json!(self.controls.iter().map(strs).collect::<Vec<_>>()),
        );
        obj.insert(
            "cost".into(),
            json!({
                "U": self.cost.weight.iter().map(|r| r.iter().map(|e| e.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "alpha": self.cost.alpha.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                "g": self.cost.g.to_string(),
            }),
        );
        obj.insert(
            "domain".into(),
            json!({ "lower": self.domain.lower, "upper": self.domain.upper }),
        );
        Value::Object(obj)
    }

    /// Field family indexed as in multi-indices: entry 0 is the drift (the
    /// zero field for driftless systems), entries `1..=m` the control fields.
    pub fn family(&self) -> Vec<VectorField> {
        let mut v = Vec::with_capacity(self.m + 1);
        v.push(self.drift.clone().unwrap_or_else(|| VectorField::zero(self.n)));
        v.extend(self.controls.iter().cloned());
        v
    }

    /// Fields entering the dependence test: `f_0..f_m` or `f_1..f_m`.
    pub fn rank_family(&self) -> Vec<VectorField> {
        let mut v = Vec::with_capacity(self.m + 1);
        if let Some(d) = &self.drift {
            v.push(d.clone());
        }
        v.extend(self.controls.iter().cloned());
        v
    }

    /// Smallest index usable in multi-indices (0 with drift, 1 without).
    pub fn first_index(&self) -> usize {
        usize::from(self.driftless)
    }

    /// Deterministic sample of the domain: center, then seeded uniform points.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = vec![self.domain.center()];
        for _ in 1..count {
            pts.push(
                self.domain
                    .lower
                    .iter()
                    .zip(&self.domain.upper)
                    .map(|(a, b)| rng.random_range(*a..*b))
                    .collect(),
            );
        }
        pts
    }

    /// Checks symmetry and positive definiteness of `U` at the given points.
    pub fn check_weight(&self, points: &[Vec<f64>]) -> Result<()> {
        let sys = self.compile();
        for p in points {
            let (u, _, _) = sys.weight(0.0, p)?;
            let asym = (&u - u.transpose()).abs().max();
            if asym > 1e-12 * (1.0 + u.abs().max()) {
                return Err(spec_err("/cost/U", format!("weight is not symmetric at {p:?}")));
            }
            let min_eig = u.symmetric_eigenvalues().min();
            if min_eig.is_nan() || min_eig <= 0.0 {
                return Err(Error::WeightNotPositive {
                    point: p.clone(),
                    min_eigenvalue: min_eig,
                });
            }
        }
        Ok(())
    }

    pub fn with_cost(&self, cost: CostSpec) -> Self {
        SystemSpec { cost, ..self.clone() }
    }

    pub fn compile(&self) -> CompiledSystem {
        CompiledSystem::new(self)
    }
}

/// Flattened numerical evaluators for a [`SystemSpec`].
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    pub n: usize,
    pub m: usize,
    pub driftless: bool,
    // f_0 (zero when driftless) followed by f_1..f_m, each n components.
    fields: Tape,
    // Row-major Jacobians in the same order.
    jacobians: Tape,
    // U (m·m), α (m), g.
    weight: Tape,
    // ∂_k U_ij (m·m·n), ∂_k α_i (m·n), ∂_k g (n).
    weight_grad: Tape,
    // All of the above in one pass, same layouts back to back.
    all: Tape,
}

/// Everything the canonical equations need at one point, filled by
/// [`CompiledSystem::eval_point`] without allocating.
#[derive(Debug, Clone)]
pub struct PointEval {
    n: usize,
    m: usize,
    values: Vec<f64>,
    scratch: Vec<f64>,
}

impl PointEval {
    /// Component `k` of field `i` (`i = 0` is the drift).
    #[inline]
    pub fn field(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n + k]
    }

    /// `∂f_i^r / ∂x_c`.
    #[inline]
    pub fn jac(&self, i: usize, r: usize, c: usize) -> f64 {
        let n = self.n;
        self.values[(self.m + 1) * n + i * n * n + r * n + c]
    }

    fn weight_base(&self) -> usize {
        (self.m + 1) * self.n * (1 + self.n)
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.values[self.weight_base() + i * self.m + j]
    }

    #[inline]
    pub fn alpha(&self, i: usize) -> f64 {
        self.values[self.weight_base() + self.m * self.m + i]
    }

    #[inline]
    pub fn g(&self) -> f64 {
        self.values[self.weight_base() + self.m * self.m + self.m]
    }

    // Gradient entry `∂_k` of weight datum `e` (U row-major, then α, then g).
    #[inline]
    fn dweight(&self, e: usize, k: usize) -> f64 {
        let m = self.m;
        self.values[self.weight_base() + m * m + m + 1 + e * self.n + k]
    }

    /// `h_i = <λ, f_i>` for `i = 0..=m`.
    pub fn pairings(&self, lambda: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.m + 1) {
            *o = (0..self.n).map(|k| lambda[k] * self.field(i, k)).sum();
        }
    }

    pub fn velocity(&self, u: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.n) {
            let mut v = self.field(0, k);
            for (i, ui) in u.iter().enumerate() {
                v += ui * self.field(i + 1, k);
            }
            *o = v;
        }
    }

    /// `∂L/∂x_k`.
    pub fn lagrangian_grad(&self, u: &[f64], k: usize) -> f64 {
        let m = self.m;
        let mut s = 0.5 * self.dweight(m * m + m, k);
        for i in 0..m {
            for j in 0..m {
                s += 0.5 * u[i] * u[j] * self.dweight(i * m + j, k);
            }
            s += u[i] * self.dweight(m * m + i, k);
        }
        s
    }

    pub fn lagrangian(&self, u: &[f64]) -> f64 {
        let m = self.m;
        let mut s = 0.5 * self.g();
        for i in 0..m {
            for j in 0..m {
                s += 0.5 * u[i] * u[j] * self.weight(i, j);
            }
            s += u[i] * self.alpha(i);
        }
        s
    }

    /// `u = U⁻¹ (h − α)` by an in-place Cholesky factorization; `h` holds
    /// `h_1..h_m` on entry and `u` on exit. Fails if `U` is not positive.
    pub fn normal_control_in_place(&self, h: &mut [f64], chol: &mut [f64]) -> bool {
        let m = self.m;
        for i in 0..m {
            h[i] -= self.alpha(i);
            for j in 0..=i {
                let mut s = self.weight(i, j);
                for k in 0..j {
                    s -= chol[i * m + k] * chol[j * m + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return false;
                    }
                    chol[i * m + i] = s.sqrt();
                } else {
                    chol[i * m + j] = s / chol[j * m + j];
                }
            }
        }
        for i in 0..m {
            let mut s = h[i];
            for k in 0..i {
                s -= chol[i * m + k] * h[k];
            }
            h[i] = s / chol[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = h[i];
            for k in i + 1..m {
                s -= chol[k * m + i] * h[k];
            }
            h[i] = s / chol[i * m + i];
        }
        true
    }

    /// `λ̇ = −A(x, u)ᵀλ − λ⁰ ∂L/∂x`.
    pub fn adjoint_rate(&self, u: &[f64], lambda: &[f64], multiplier: f64, out: &mut [f64]) {
        let n = self.n;
        for (c, o) in out.iter_mut().enumerate().take(n) {
            let mut s = 0.0;
            for r in 0..n {
                let mut a = self.jac(0, r, c);
                for (i, ui) in u.iter().enumerate() {
                    a += ui * self.jac(i + 1, r, c);
                }
                s += a * lambda[r];
            }
            let mut v = -s;
            if multiplier != 0.0 {
                v -= multiplier * self.lagrangian_grad(u, c);
            }
            *o = v;
        }
    }
}

impl CompiledSystem {
    fn new(spec: &SystemSpec) -> Self {
        let family = spec.family();
        let n = spec.n;
        let fields = Tape::compile(
            &family
                .iter()
                .flat_map(|f| f.components().iter().cloned())
                .collect::<Vec<_>>(),
        );
        let jacobians = Tape::compile(&family.iter().flat_map(|f| f.jacobian()).collect::<Vec<_>>());
        let mut w: Vec<Expr> = spec.cost.weight.iter().flatten().cloned().collect();
        w.extend(spec.cost.alpha.iter().cloned());
        w.push(spec.cost.g.clone());
        let weight = Tape::compile(&w);
        let weight_grad = Tape::compile(
            &w.iter()
                .flat_map(|e| (0..n).map(move |k| e.diff(k)))
                .collect::<Vec<_>>(),
        );
        let mut everything: Vec<Expr> = family.iter().flat_map(|f| f.components().iter().cloned()).collect();
        everything.extend(family.iter().flat_map(|f| f.jacobian()));
        everything.extend(w.iter().cloned());
        everything.extend(w.iter().flat_map(|e| (0..n).map(move |k| e.diff(k))));
        let all = Tape::compile(&everything);
        CompiledSystem {
            n,
            m: spec.m,
            driftless: spec.driftless,
            fields,
            jacobians,
            weight,
            weight_grad,
            all,
        }
    }

    pub fn point_eval(&self) -> PointEval {
        PointEval {
            n: self.n,
            m: self.m,
            values: vec![0.0; self.all.n_outputs()],
            scratch: Vec::with_capacity(self.all.len()),
        }
    }

    pub fn eval_point(&self, t: f64, x: &[f64], pe: &mut PointEval) -> Result<(), DomainError> {
        self.all.eval_into(t, x, &mut pe.scratch, &mut pe.values)
    }

    /// Field values as columns: `n × (m+1)`, column 0 the drift.
    pub fn field_matrix(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, DomainError> {
        let v = self.fields.eval(t, x)?;
        Ok(DMatrix::from_column_slice(self.n, self.m + 1, &v))
    }

    /// `B(x) = [f_1(x) … f_m(x)]`.
    pub fn control_matrix(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, DomainError> {
        Ok(self.field_matrix(t, x)?.columns(1, self.m).into_owned())
    }

    pub fn velocity(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DomainError> {
        let f = self.field_matrix(t, x)?;
        let mut v: Vec<f64> = f.column(0).iter().copied().collect();
        for (i, ui) in u.iter().enumerate() {
            for (k, vk) in v.iter_mut().enumerate() {
                *vk += ui * f[(k, i + 1)];
            }
        }
        Ok(v)
    }

    /// Jacobians `Df_i(x)` for `i = 0..=m`.
    pub fn jacobians(&self, t: f64, x: &[f64]) -> Result<Vec<DMatrix<f64>>, DomainError> {
        let v = self.jacobians.eval(t, x)?;
        let nn = self.n * self.n;
        Ok((0..=self.m)
            .map(|i| DMatrix::from_row_slice(self.n, self.n, &v[i * nn..(i + 1) * nn]))
            .collect())
    }

    /// `A = Df_0 + Σ u_i Df_i`.
    pub fn state_jacobian(&self, t: f64, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>, DomainError> {
        let jac = self.jacobians(t, x)?;
        let mut a = jac[0].clone();
        for (i, ui) in u.iter().enumerate() {
            a += &jac[i + 1] * *ui;
        }
        Ok(a)
    }

    /// `(U(x), α(x), g(t, x))`.
    pub fn weight(&self, t: f64, x: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>, f64), DomainError> {
        let v = self.weight.eval(t, x)?;
        let m = self.m;
        let u = DMatrix::from_row_slice(m, m, &v[..m * m]);
        let a = DVector::from_column_slice(&v[m * m..m * m + m]);
        Ok((u, a, v[m * m + m]))
    }

    /// Running cost `½ uᵀUu + αᵀu + ½ g`.
    pub fn lagrangian(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64, DomainError> {
        let (w, a, g) = self.weight(t, x)?;
        let uv = DVector::from_column_slice(u);
        Ok(0.5 * uv.dot(&(&w * &uv)) + a.dot(&uv) + 0.5 * g)
    }

    /// `∂L/∂x` of the running cost.
    pub fn lagrangian_grad(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DomainError> {
        let n = self.n;
        let m = self.m;
        let d = self.weight_grad.eval(t, x)?;
        let mut out = vec![0.0; n];
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += 0.5 * u[i] * u[j] * d[(i * m + j) * n + k];
                }
                s += u[i] * d[(m * m + i) * n + k];
            }
            s += 0.5 * d[(m * m + m) * n + k];
            *o = s;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DRIFT2D: &str = r#"{
        "dimension": 2, "controls": 1, "driftless": false,
        "drift": ["1 + x2^2", "0"], "fields": [["0", "1"]],
        "cost": {"U": [["2"]], "alpha": ["0"], "g": "0"},
        "domain": {"lower": [-1, -1], "upper": [2, 1]}
    }"#;

    #[test]
    fn loads_and_round_trips() {
        let s = SystemSpec::from_json_str(DRIFT2D).unwrap();
        assert_eq!((s.n, s.m, s.driftless), (2, 1, false));
        let again = SystemSpec::from_json(&s.to_json()).unwrap();
        let (a, b) = (s.compile(), again.compile());
        for p in s.sample_points(8, 3) {
            assert_eq!(a.field_matrix(0.0, &p).unwrap(), b.field_matrix(0.0, &p).unwrap());
            assert_eq!(a.weight(0.0, &p).unwrap(), b.weight(0.0, &p).unwrap());
        }
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let bad = DRIFT2D.replace("\"1 + x2^2\"", "\"1 + x3\"");
        match SystemSpec::from_json_str(&bad) {
            Err(Error::Expression { pointer, .. }) => assert_eq!(pointer, "/drift/0"),
            other => panic!("{other:?}"),
        }
        let bad = DRIFT2D.replace("\"controls\": 1", "\"controls\": 2");
        match SystemSpec::from_json_str(&bad) {
            Err(Error::Spec { pointer, .. }) => assert_eq!(pointer, "/controls"),
            other => panic!("{other:?}"),
        }
        let bad = DRIFT2D.replace("[[\"2\"]]", "[[\"0 - 1\"]]");
        assert!(matches!(SystemSpec::from_json_str(&bad), Err(Error::WeightNotPositive { .. })));
        let bad = DRIFT2D.replace("\"lower\": [-1, -1]", "\"lower\": [-1]");
        match SystemSpec::from_json_str(&bad) {
            Err(Error::Spec { pointer, .. }) => assert_eq!(pointer, "/domain/lower"),
            other => panic!("{other:?}"),
        }
        let bad = DRIFT2D.replace("\"driftless\": false", "\"driftless\": false, \"drfit\": 1");
        match SystemSpec::from_json_str(&bad) {
            Err(Error::Spec { pointer, .. }) => assert_eq!(pointer, "/drfit"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lagrangian_uses_half_weight_on_g() {
        let s = SystemSpec::from_json_str(&DRIFT2D.replace("\"g\": \"0\"", "\"g\": \"x1^2\"")).unwrap();
        let c = s.compile();
        assert_eq!(c.lagrangian(0.0, &[3.0, 0.0], &[1.0]).unwrap(), 1.0 + 4.5);
        assert_eq!(c.lagrangian_grad(0.0, &[3.0, 0.0], &[1.0]).unwrap(), vec![3.0, 0.0]);
    }

    #[test]
    fn state_jacobian_along_axis() {
        let s = SystemSpec::from_json_str(DRIFT2D).unwrap();
        let a = s.compile().state_jacobian(0.0, &[0.3, 0.5], &[2.0]).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    }
}
