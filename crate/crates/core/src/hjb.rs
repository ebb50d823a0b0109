//! Explicit grid solver for the Hamilton-Jacobi equation of the value
//! function in the plane.
//!
//! The value `S(t, x)` of reaching `x` at time `t` from `x0` solves
//! `S_t + H(t, x, ∇S) = ½ g(t, x)` with
//! `H = <p, f_0> + ½ (h − α)ᵀ U⁻¹ (h − α)`, `h_i = <p, f_i>`.
//! The solver marches `w(t, ξ) = S(t, ξ + c t)` in a frame moving with a
//! constant velocity `c`, so a thin grid can follow a drift.
//!
//! The scheme is local Lax-Friedrichs with zero-gradient edges. The initial
//! surrogate for the point mass at `x0` is the soft quadratic
//! `min(cap, Σ (x_i − x0_i)² / (2 ε_i))`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::system::SystemSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HjbConfig {
    /// Lower corner of the grid in frame coordinates `ξ`.
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub horizon: f64,
    pub x0: [f64; 2],
    /// Widths of the initial quadratic well.
    pub eps: [f64; 2],
    pub cap: f64,
    pub cfl: f64,
    /// Box on each momentum component.
    pub clamp: f64,
    /// Frame velocity `c`.
    pub frame: [f64; 2],
    /// Number of evenly spaced snapshots to keep (the final value is always kept).
    pub snapshots: usize,
}

impl HjbConfig {
    pub fn square(lower: [f64; 2], upper: [f64; 2], n: usize, horizon: f64, x0: [f64; 2], eps: f64) -> Self {
        HjbConfig {
            lower,
            upper,
            nx: n,
            ny: n,
            horizon,
            x0,
            eps: [eps, eps],
            cap: 1e6,
            cfl: 0.9,
            clamp: 50.0,
            frame: [0.0, 0.0],
            snapshots: 0,
        }
    }

    pub fn with_resolution(&self, n: usize) -> Self {
        HjbConfig { nx: n, ny: n, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("hjb: {m}")));
        if self.nx < 3 || self.ny < 3 {
            return bad("need at least 3 nodes per axis");
        }
        if !(self.upper[0] > self.lower[0] && self.upper[1] > self.lower[1]) {
            return bad("empty domain");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return bad("CFL number must lie in (0, 0.9]");
        }
        if !(self.eps[0] > 0.0 && self.eps[1] > 0.0 && self.cap > 0.0 && self.clamp > 0.0) {
            return bad("eps, cap and clamp must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
}

/// Marker level above which a node counts as reached by edge data. Upwind
/// smearing puts it ahead of the true front by a few `sqrt(dx t)`.
pub const CONTAMINATION_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HjbGrid {
    pub config: HjbConfig,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub dx: f64,
    pub dy: f64,
    /// `w(T, ξ)`, index `i * ny + j`.
    pub values: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Largest `dt (a_x/dx + a_y/dy)` actually used.
    pub cfl_used: f64,
    /// Steps where the previous step size would have broken the CFL bound.
    pub cfl_reductions: usize,
    /// Cell updates that hit the momentum clamp.
    pub clamp_events: usize,
    /// Edge marker at the final time: 1 on the edges, carried inward along
    /// characteristics by first-order upwinding.
    pub contamination: Vec<f64>,
}

impl HjbGrid {
    /// Bilinear value at physical point `x` and the final time.
    pub fn value_at(&self, x: [f64; 2]) -> Option<f64> {
        let t = self.config.horizon;
        let xi = [x[0] - self.config.frame[0] * t, x[1] - self.config.frame[1] * t];
        self.value_in_frame(&self.values, xi)
    }

    fn value_in_frame(&self, values: &[f64], xi: [f64; 2]) -> Option<f64> {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let fx = (xi[0] - self.xs[0]) / self.dx;
        let fy = (xi[1] - self.ys[0]) / self.dy;
        let tiny = 1e-9;
        if fx < -tiny || fy < -tiny || fx > (nx - 1) as f64 + tiny || fy > (ny - 1) as f64 + tiny {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(nx - 2);
        let j = (fy.floor().max(0.0) as usize).min(ny - 2);
        let (a, b) = (fx - i as f64, fy - j as f64);
        let v = |i: usize, j: usize| values[i * ny + j];
        Some(
            (1.0 - a) * (1.0 - b) * v(i, j)
                + a * (1.0 - b) * v(i + 1, j)
                + (1.0 - a) * b * v(i, j + 1)
                + a * b * v(i + 1, j + 1),
        )
    }

    /// Whether edge data cannot have reached `x` by the final time.
    pub fn outside_contamination(&self, x: [f64; 2]) -> bool {
        let t = self.config.horizon;
        let xi = [x[0] - self.config.frame[0] * t, x[1] - self.config.frame[1] * t];
        self.value_in_frame(&self.contamination, xi)
            .is_some_and(|m| m < CONTAMINATION_LEVEL)
    }

    pub fn contaminated_fraction(&self) -> f64 {
        let bad = self.contamination.iter().filter(|&&m| m >= CONTAMINATION_LEVEL).count();
        bad as f64 / self.contamination.len() as f64
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `x,y,value`, physical coordinates at the final time.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let t = self.config.horizon;
        writeln!(w, "x,y,value")?;
        let ny = self.ys.len();
        for (i, xi) in self.xs.iter().enumerate() {
            for (j, yj) in self.ys.iter().enumerate() {
                let x = xi + self.config.frame[0] * t;
                let y = yj + self.config.frame[1] * t;
                writeln!(w, "{x:?},{y:?},{:?}", self.values[i * ny + j])?;
            }
        }
        Ok(())
    }

    /// Scheme parameters and run records, without the value arrays.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "scheme": "local Lax-Friedrichs, zero-gradient edges",
            "config": self.config,
            "dx": self.dx,
            "dy": self.dy,
            "steps": self.steps,
            "dt_min": self.dt_min,
            "dt_max": self.dt_max,
            "cfl_used": self.cfl_used,
            "cfl_reductions": self.cfl_reductions,
            "clamp_events": self.clamp_events,
            "contaminated_fraction": self.contaminated_fraction(),
            "min_value": self.min_value(),
            "snapshot_times": self.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(),
        })
    }
}

// Per-cell data: f_0..f_m (2 each), U (m²), α (m), g.
struct Data {
    tape: Tape,
    m: usize,
}

impl Data {
    fn new(spec: &SystemSpec) -> Self {
        let mut out: Vec<Expr> = spec
            .family()
            .iter()
            .flat_map(|f| f.components().iter().cloned())
            .collect();
        out.extend(spec.cost.weight.iter().flatten().cloned());
        out.extend(spec.cost.alpha.iter().cloned());
        out.push(spec.cost.g.clone());
        Data { tape: Tape::compile(&out), m: spec.m }
    }

    fn width(&self) -> usize {
        2 * (self.m + 1) + self.m * self.m + self.m + 1
    }
}

/// `H − <p, c>` and its momentum gradient; `None` if `U` is not positive.
fn hamiltonian(d: &[f64], m: usize, p: [f64; 2], c: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let f = |i: usize, k: usize| d[2 * i + k];
    let ub = 2 * (m + 1);
    let mut w = [0.0; 2];
    for i in 0..m {
        w[i] = p[0] * f(i + 1, 0) + p[1] * f(i + 1, 1) - d[ub + m * m + i];
    }
    let u = match m {
        1 => {
            let a = d[ub];
            if !(a > 0.0) {
                return None;
            }
            [w[0] / a, 0.0]
        }
        2 => {
            let (a, b, cc) = (d[ub], 0.5 * (d[ub + 1] + d[ub + 2]), d[ub + 3]);
            let det = a * cc - b * b;
            if !(a > 0.0 && det > 0.0) {
                return None;
            }
            [(cc * w[0] - b * w[1]) / det, (a * w[1] - b * w[0]) / det]
        }
        _ => unreachable!("planar systems have one or two controls"),
    };
    let mut h = p[0] * (f(0, 0) - c[0]) + p[1] * (f(0, 1) - c[1]);
    let mut g = [f(0, 0) - c[0], f(0, 1) - c[1]];
    for i in 0..m {
        h += 0.5 * w[i] * u[i];
        g[0] += u[i] * f(i + 1, 0);
        g[1] += u[i] * f(i + 1, 1);
    }
    Some((h, g))
}

fn not_positive(x: [f64; 2]) -> Error {
    Error::WeightNotPositive { point: x.to_vec(), min_eigenvalue: f64::NAN }
}

struct CellUpdate {
    rate: f64,
    ax: f64,
    ay: f64,
    visc: f64,
    speed: [f64; 2],
    clamped: bool,
}

/// Marches the value function of reaching `x` from `cfg.x0` up to `cfg.horizon`.
pub fn solve_hjb_2d(spec: &SystemSpec, cfg: &HjbConfig) -> Result<HjbGrid> {
    if spec.n != 2 {
        return Err(Error::InvalidArgument(format!("hjb: state dimension must be 2, got {}", spec.n)));
    }
    cfg.validate()?;
    let (nx, ny) = (cfg.nx, cfg.ny);
    let dx = (cfg.upper[0] - cfg.lower[0]) / (nx - 1) as f64;
    let dy = (cfg.upper[1] - cfg.lower[1]) / (ny - 1) as f64;
    let xs: Vec<f64> = (0..nx).map(|i| cfg.lower[0] + i as f64 * dx).collect();
    let ys: Vec<f64> = (0..ny).map(|j| cfg.lower[1] + j as f64 * dy).collect();
    let mut v: Vec<f64> = xs
        .iter()
        .flat_map(|x| {
            ys.iter().map(move |y| {
                let q = (x - cfg.x0[0]).powi(2) / (2.0 * cfg.eps[0]) + (y - cfg.x0[1]).powi(2) / (2.0 * cfg.eps[1]);
                q.min(cfg.cap)
            })
        })
        .collect();
    let data = Data::new(spec);
    let width = data.width();
    let m = data.m;
    let c = cfg.frame;
    let clamp = cfg.clamp;

    let mut snapshots = Vec::new();
    let mut next_snap = 1usize;
    let snap_time = |k: usize| cfg.horizon * k as f64 / cfg.snapshots as f64;
    let mut t = 0.0;
    let (mut steps, mut dt_min, mut dt_max, mut cfl_used, mut reductions, mut clamp_events) =
        (0usize, f64::INFINITY, 0.0f64, 0.0f64, 0usize, 0usize);
    let edge = |k: usize| {
        let (i, j) = (k / ny, k % ny);
        i == 0 || j == 0 || i + 1 == nx || j + 1 == ny
    };
    let mut contamination: Vec<f64> = (0..nx * ny).map(|k| if edge(k) { 1.0 } else { 0.0 }).collect();
    let mut prev_dt = f64::INFINITY;

    while t < cfg.horizon * (1.0 - 1e-14) {
        let vr = &v;
        let upd: Vec<CellUpdate> = (0..nx)
            .into_par_iter()
            .map_init(
                || (Vec::new(), vec![0.0; width]),
                |(scratch, d), i| {
                    let mut row = Vec::with_capacity(ny);
                    for j in 0..ny {
                        let at = |i: usize, j: usize| vr[i * ny + j];
                        let here = at(i, j);
                        let pxm = if i > 0 { (here - at(i - 1, j)) / dx } else { 0.0 };
                        let pxp = if i + 1 < nx { (at(i + 1, j) - here) / dx } else { 0.0 };
                        let pym = if j > 0 { (here - at(i, j - 1)) / dy } else { 0.0 };
                        let pyp = if j + 1 < ny { (at(i, j + 1) - here) / dy } else { 0.0 };
                        let x = [xs[i] + c[0] * t, ys[j] + c[1] * t];
                        data.tape.eval_into(t, &x, scratch, d)?;
                        let mut clamped = false;
                        let mut cl = |p: f64| {
                            if p.abs() > clamp {
                                clamped = true;
                                p.signum() * clamp
                            } else {
                                p
                            }
                        };
                        let pc = [cl(0.5 * (pxm + pxp)), cl(0.5 * (pym + pyp))];
                        let pm = [cl(pxm), cl(pym)];
                        let pp = [cl(pxp), cl(pyp)];
                        let (h, gc) = hamiltonian(d, m, pc, c).ok_or_else(|| not_positive(x))?;
                        let (_, gm) = hamiltonian(d, m, pm, c).ok_or_else(|| not_positive(x))?;
                        let (_, gp) = hamiltonian(d, m, pp, c).ok_or_else(|| not_positive(x))?;
                        let ax = gc[0].abs().max(gm[0].abs()).max(gp[0].abs());
                        let ay = gc[1].abs().max(gm[1].abs()).max(gp[1].abs());
                        row.push(CellUpdate {
                            rate: h - 0.5 * d[width - 1],
                            ax,
                            ay,
                            visc: 0.5 * ax * (pp[0] - pm[0]) + 0.5 * ay * (pp[1] - pm[1]),
                            speed: gc,
                            clamped,
                        });
                    }
                    Ok(row)
                },
            )
            .collect::<Result<Vec<Vec<CellUpdate>>>>()?
            .into_iter()
            .flatten()
            .collect();

        let ax = upd.iter().map(|u| u.ax).fold(0.0, f64::max);
        let ay = upd.iter().map(|u| u.ay).fold(0.0, f64::max);
        let rate = ax / dx + ay / dy;
        let mut dt = if rate > 0.0 { cfg.cfl / rate } else { cfg.horizon - t };
        if prev_dt.is_finite() && prev_dt * rate > cfg.cfl {
            reductions += 1;
        }
        let mut target = cfg.horizon;
        if cfg.snapshots > 0 && next_snap < cfg.snapshots {
            target = snap_time(next_snap);
        }
        if t + dt >= target {
            dt = target - t;
        }
        for (cell, u) in v.iter_mut().zip(&upd) {
            *cell -= dt * (u.rate - u.visc);
        }
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { i: k / ny, j: k % ny, t: t + dt });
        }
        clamp_events += upd.iter().filter(|u| u.clamped).count();
        // The time step already satisfies the CFL bound for these speeds.
        let mk = &contamination;
        let moved: Vec<f64> = (0..nx * ny)
            .map(|k| {
                if edge(k) {
                    return 1.0;
                }
                let s = upd[k].speed;
                let gx = if s[0] > 0.0 { mk[k] - mk[k - ny] } else { mk[k + ny] - mk[k] };
                let gy = if s[1] > 0.0 { mk[k] - mk[k - 1] } else { mk[k + 1] - mk[k] };
                mk[k] - dt * (s[0] * gx / dx + s[1] * gy / dy)
            })
            .collect();
        contamination = moved;
        t += dt;
        steps += 1;
        dt_min = dt_min.min(dt);
        dt_max = dt_max.max(dt);
        cfl_used = cfl_used.max(dt * rate);
        prev_dt = dt;
        if cfg.snapshots > 0 && next_snap < cfg.snapshots && (t - snap_time(next_snap)).abs() < 1e-15 * cfg.horizon.max(1.0) {
            snapshots.push(Snapshot { t, values: v.clone() });
            next_snap += 1;
        }
    }
    if cfg.snapshots > 0 {
        snapshots.push(Snapshot { t, values: v.clone() });
    }
    Ok(HjbGrid {
        config: cfg.clone(),
        xs,
        ys,
        dx,
        dy,
        values: v,
        snapshots,
        steps,
        dt_min,
        dt_max,
        cfl_used,
        cfl_reductions: reductions,
        clamp_events,
        contamination,
    })
}
