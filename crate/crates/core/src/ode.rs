//! Explicit Runge–Kutta integration onto a prescribed time grid.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum OdeError {
    #[error("solution blew up at t = {t} (norm {norm:e})")]
    BlowUp { t: f64, norm: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("right-hand side failed at t = {t}: {source}")]
    Rhs {
        t: f64,
        #[source]
        source: Box<crate::error::Error>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Classical RK4 with a fixed number of substeps per grid interval.
    Rk4 { substeps: usize },
    /// Dormand–Prince 5(4) with error control per component.
    Dopri5 { atol: f64, rtol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub method: Method,
    /// State norm beyond which integration stops with [`OdeError::BlowUp`].
    pub max_norm: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            method: Method::Dopri5 { atol: 1e-9, rtol: 1e-9 },
            max_norm: 1e8,
            max_steps: 2_000_000,
        }
    }
}

impl OdeOptions {
    pub fn fixed(substeps: usize) -> Self {
        OdeOptions {
            method: Method::Rk4 { substeps: substeps.max(1) },
            ..Default::default()
        }
    }

    pub fn adaptive(atol: f64, rtol: f64) -> Self {
        OdeOptions {
            method: Method::Dopri5 { atol, rtol },
            ..Default::default()
        }
    }
}

/// Right-hand side `dy = F(t, y)`. Errors abort the integration.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), crate::error::Error>;

    /// Called with every accepted step end point.
    fn accepted(&mut self, _t: f64, _y: &[f64]) {}
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), crate::error::Error>,
{
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), crate::error::Error> {
        self(t, y, dy)
    }
}

fn call<R: Rhs + ?Sized>(f: &mut R, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), OdeError> {
    f.eval(t, y, dy).map_err(|e| OdeError::Rhs { t, source: Box::new(e) })?;
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::BlowUp { t, norm: f64::INFINITY });
    }
    Ok(())
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrates from `times[0]` through every grid time (increasing or
/// decreasing) and returns the state at each of them.
pub fn integrate<R: Rhs + ?Sized>(
    f: &mut R,
    y0: &[f64],
    times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>, OdeError> {
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0.to_vec();
    out.push(y.clone());
    f.accepted(times[0], &y);
    let mut h_guess = None;
    for w in times.windows(2) {
        match opts.method {
            Method::Rk4 { substeps } => {
                let h = (w[1] - w[0]) / substeps as f64;
                for s in 0..substeps {
                    let t = w[0] + s as f64 * h;
                    rk4_step(f, t, h, &mut y)?;
                    f.accepted(t + h, &y);
                }
            }
            Method::Dopri5 { atol, rtol } => {
                h_guess = Some(dopri_span(f, w[0], w[1], &mut y, atol, rtol, h_guess, opts)?);
            }
        }
        let nrm = norm(&y);
        if !(nrm <= opts.max_norm) {
            return Err(OdeError::BlowUp { t: w[1], norm: nrm });
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn rk4_step<R: Rhs + ?Sized>(f: &mut R, t: f64, h: f64, y: &mut [f64]) -> Result<(), OdeError> {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    call(f, t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    call(f, t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    call(f, t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    call(f, t + h, &tmp, &mut k4)?;
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

// Dormand–Prince coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[allow(clippy::too_many_arguments)]
fn dopri_span<R: Rhs + ?Sized>(
    f: &mut R,
    t0: f64,
    t1: f64,
    y: &mut Vec<f64>,
    atol: f64,
    rtol: f64,
    h_guess: Option<f64>,
    opts: &OdeOptions,
) -> Result<f64, OdeError> {
    let n = y.len();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(h_guess.unwrap_or(0.0));
    }
    let dir = span.signum();
    let mut h = h_guess.map(f64::abs).unwrap_or(span.abs()).min(span.abs());
    let mut t = t0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut last_h = h;
    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        let hs = if last { remaining } else { h };
        let hd = hs * dir;
        call(f, t, y, &mut k[0])?;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += hd * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            call(f, t + C[s] * hd, &tmp, &mut k[s])?;
        }
        let mut err = 0.0;
        for i in 0..n {
            let mut a5 = y[i];
            let mut e = 0.0;
            for s in 0..7 {
                a5 += hd * B5[s] * k[s][i];
                e += hd * (B5[s] - B4[s]) * k[s][i];
            }
            y5[i] = a5;
            let sc = atol + rtol * y[i].abs().max(a5.abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if err.is_nan() {
            return Err(OdeError::BlowUp { t, norm: f64::NAN });
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + hd };
            y.copy_from_slice(&y5);
            last_h = hs;
            f.accepted(t, y);
            let nrm = norm(y);
            if !(nrm <= opts.max_norm) {
                return Err(OdeError::BlowUp { t, norm: nrm });
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = hs * fac;
        if err > 1.0 && h < 1e-14 * (1.0 + t.abs()) {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
    }
    Ok(last_h.max(h.min(span.abs())))
}

/// Composite Simpson weights on a uniform grid of `len` points with spacing
/// `h`. An odd interval count closes with the quadratic through the last
/// three nodes, which keeps third-order accuracy.
pub fn simpson_weights(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; len];
    match len {
        0 | 1 => return w,
        2 => return vec![0.5 * h; 2],
        _ => {}
    }
    let intervals = len - 1;
    let even = intervals - intervals % 2;
    for k in (0..even).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if even < intervals {
        w[len - 3] -= h / 12.0;
        w[len - 2] += 8.0 * h / 12.0;
        w[len - 1] += 5.0 * h / 12.0;
    }
    w
}

pub fn uniform_grid(t_end: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|k| t_end * k as f64 / intervals as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), crate::error::Error> {
        dy[0] = -y[0];
        dy[1] = y[0];
        Ok(())
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let err = |k: usize| {
            let grid = uniform_grid(2.0, k);
            let ys = integrate(&mut decay, &[1.0, 0.0], &grid, &OdeOptions::fixed(1)).unwrap();
            (ys[k][0] - (-2.0f64).exp()).abs()
        };
        let ratio = err(20) / err(40);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn dopri_meets_tolerance_and_runs_backwards() {
        let grid = uniform_grid(3.0, 7);
        let ys = integrate(&mut decay, &[1.0, 0.0], &grid, &OdeOptions::default()).unwrap();
        assert!((ys[7][0] - (-3.0f64).exp()).abs() < 1e-9);
        let back: Vec<f64> = grid.iter().rev().copied().collect();
        let zs = integrate(&mut decay, &ys[7], &back, &OdeOptions::default()).unwrap();
        assert!((zs[7][0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn blow_up_is_reported() {
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), crate::error::Error> {
            dy[0] = y[0] * y[0];
            Ok(())
        };
        let grid = uniform_grid(2.0, 20);
        let err = integrate(&mut f, &[1.0], &grid, &OdeOptions::default()).unwrap_err();
        assert!(matches!(err, OdeError::BlowUp { .. } | OdeError::StepSizeUnderflow { .. }));
    }

    #[test]
    fn simpson_weights_are_exact_on_low_degree() {
        let grid = uniform_grid(2.0, 6);
        let w = simpson_weights(grid.len(), 2.0 / 6.0);
        let s: f64 = grid.iter().zip(&w).map(|(t, w)| w * t.powi(3)).sum();
        assert!((s - 4.0).abs() < 1e-13);
        let grid = uniform_grid(2.0, 7);
        let w = simpson_weights(grid.len(), 2.0 / 7.0);
        let s: f64 = grid.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((s - 8.0 / 3.0).abs() < 1e-13);
    }
}
