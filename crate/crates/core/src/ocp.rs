//! The fixed-horizon quadratic-cost problem: cost quadrature, Newton
//! shooting on normal extremals and a multistart estimate of the value
//! function.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{integrate_extremal, Extremal};
use crate::ode::{simpson_weights, OdeOptions};
use crate::system::{CompiledSystem, SystemSpec};

/// `∫ ½ uᵀUu + αᵀu + ½ g dt` by composite Simpson on a uniform grid.
pub fn cost_eval(sys: &CompiledSystem, times: &[f64], states: &[Vec<f64>], controls: &[Vec<f64>]) -> Result<f64> {
    if times.len() < 2 {
        return Ok(0.0);
    }
    let w = simpson_weights(times.len(), times[1] - times[0]);
    let mut total = 0.0;
    for k in 0..times.len() {
        total += w[k] * sys.lagrangian(times[k], &states[k], &controls[k])?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingProblem {
    pub x0: Vec<f64>,
    pub target: Vec<f64>,
    pub horizon: f64,
    pub intervals: usize,
    pub guesses: Vec<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub ode: OdeOptions,
}

impl ShootingProblem {
    /// Defaults: residual tolerance `1e-9`, 100 iterations, 200 grid
    /// intervals, fixed-step RK4 with 4 substeps per interval.
    pub fn new(x0: Vec<f64>, target: Vec<f64>, horizon: f64, guesses: Vec<Vec<f64>>) -> Self {
        ShootingProblem {
            x0,
            target,
            horizon,
            intervals: 200,
            guesses,
            tol: 1e-9,
            max_iter: 100,
            ode: OdeOptions::fixed(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootAttempt {
    pub guess_index: usize,
    pub guess: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Residual norm after each accepted Newton step (non-increasing).
    pub residual_history: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub cost: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub converged: bool,
    pub lambda0: Vec<f64>,
    pub cost: Option<f64>,
    pub residual: f64,
    pub best_attempt: usize,
    pub attempts: Vec<ShootAttempt>,
    pub extremal: Option<Extremal>,
}

fn endpoint(spec: &SystemSpec, sys: &CompiledSystem, p: &ShootingProblem, lambda0: &[f64]) -> Result<Extremal> {
    integrate_extremal(spec, sys, &p.x0, lambda0, -1.0, p.horizon, p.intervals, None, &p.ode)
}

fn residual_of(e: &Extremal, target: &[f64]) -> DVector<f64> {
    DVector::from_iterator(target.len(), e.final_state().iter().zip(target).map(|(a, b)| a - b))
}

/// Damped Newton from one guess.
pub fn shoot_from(
    spec: &SystemSpec,
    sys: &CompiledSystem,
    p: &ShootingProblem,
    guess_index: usize,
    guess: &[f64],
) -> (ShootAttempt, Option<Extremal>) {
    let n = spec.n;
    let mut attempt = ShootAttempt {
        guess_index,
        guess: guess.to_vec(),
        converged: false,
        iterations: 0,
        residual: f64::INFINITY,
        residual_history: Vec::new(),
        lambda0: guess.to_vec(),
        cost: None,
        failure: None,
    };
    let mut lam = DVector::from_column_slice(guess);
    let mut e = match endpoint(spec, sys, p, lam.as_slice()) {
        Ok(e) => e,
        Err(err) => {
            attempt.failure = Some(err.to_string());
            return (attempt, None);
        }
    };
    let mut r = residual_of(&e, &p.target);
    let mut rn = r.norm();
    attempt.residual_history.push(rn);
    while rn > p.tol && attempt.iterations < p.max_iter {
        attempt.iterations += 1;
        let delta = 1e-6 * (1.0 + lam.norm());
        let mut jac = DMatrix::zeros(n, n);
        let mut ok = true;
        for j in 0..n {
            let mut lp = lam.clone();
            lp[j] += delta;
            match endpoint(spec, sys, p, lp.as_slice()) {
                Ok(ep) => jac.set_column(j, &((residual_of(&ep, &p.target) - &r) / delta)),
                Err(err) => {
                    attempt.failure = Some(format!("finite-difference probe failed: {err}"));
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let step = match svd.solve(&r, 1e-13 * smax) {
            Ok(s) => s,
            Err(err) => {
                attempt.failure = Some(err.to_string());
                break;
            }
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &lam - &step * alpha;
            if let Ok(ec) = endpoint(spec, sys, p, cand.as_slice()) {
                let rc = residual_of(&ec, &p.target);
                if rc.norm() < (1.0 - 1e-4 * alpha) * rn {
                    accepted = Some((cand, ec, rc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((l, ec, rc)) => {
                lam = l;
                e = ec;
                r = rc;
                rn = r.norm();
                attempt.residual_history.push(rn);
            }
            None => {
                attempt.failure = Some("line search stalled".into());
                break;
            }
        }
    }
    attempt.residual = rn;
    attempt.lambda0 = lam.iter().copied().collect();
    attempt.converged = rn <= p.tol;
    if attempt.converged {
        attempt.cost = cost_eval(sys, &e.times, &e.states, &e.controls).ok();
        if attempt.cost.is_none() {
            attempt.converged = false;
            attempt.failure = Some("cost evaluation failed".into());
        }
    } else if attempt.failure.is_none() {
        attempt.failure = Some("iteration cap reached".into());
    }
    (attempt, Some(e))
}

/// Newton shooting from every guess; the converged solution of least cost
/// wins, otherwise the attempt with the smallest residual is reported.
pub fn shoot(spec: &SystemSpec, p: &ShootingProblem) -> Result<ShootingResult> {
    if p.guesses.is_empty() {
        return Err(Error::InvalidArgument("shooting needs at least one guess".into()));
    }
    if p.target.len() != spec.n || p.x0.len() != spec.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            found: p.target.len().min(p.x0.len()),
            what: "shooting endpoints",
        });
    }
    if p.horizon <= 0.0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let sys = spec.compile();
    let runs: Vec<(ShootAttempt, Option<Extremal>)> = p
        .guesses
        .par_iter()
        .enumerate()
        .map(|(i, g)| shoot_from(spec, &sys, p, i, g))
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, (a, _))| a.converged)
        .min_by(|(_, (a, _)), (_, (b, _))| a.cost.unwrap_or(f64::INFINITY).total_cmp(&b.cost.unwrap_or(f64::INFINITY)))
        .or_else(|| {
            runs.iter()
                .enumerate()
                .min_by(|(_, (a, _)), (_, (b, _))| a.residual.total_cmp(&b.residual))
        })
        .map(|(i, _)| i)
        .expect("at least one guess");
    let (attempts, extremals): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let a = &attempts[best];
    Ok(ShootingResult {
        converged: a.converged,
        lambda0: a.lambda0.clone(),
        cost: a.cost,
        residual: a.residual,
        best_attempt: best,
        extremal: extremals.into_iter().nth(best).flatten(),
        attempts,
    })
}

/// Seeded standard-normal covector guesses.
pub fn normal_guesses(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueStatus {
    Reachable,
    /// No guess converged: the infimum is over an empty set as far as the
    /// search can tell.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueResult {
    pub status: ValueStatus,
    pub value: Option<f64>,
    pub lambda0: Option<Vec<f64>>,
    /// Distinct extremals reach the target at (nearly) the same cost.
    pub multiple_minimizers: bool,
    pub converged: usize,
    pub shooting: ShootingResult,
}

/// Estimate of the value function at `target` from `starts` seeded guesses.
pub fn value_at(
    spec: &SystemSpec,
    x0: &[f64],
    horizon: f64,
    target: &[f64],
    starts: usize,
    seed: u64,
    ode: Option<OdeOptions>,
) -> Result<ValueResult> {
    let mut p = ShootingProblem::new(x0.to_vec(), target.to_vec(), horizon, normal_guesses(spec.n, starts.max(1), seed));
    if let Some(o) = ode {
        p.ode = o;
    }
    let res = shoot(spec, &p)?;
    let converged = res.attempts.iter().filter(|a| a.converged).count();
    if !res.converged {
        return Ok(ValueResult {
            status: ValueStatus::Unreachable,
            value: None,
            lambda0: None,
            multiple_minimizers: false,
            converged,
            shooting: res,
        });
    }
    let value = res.cost.expect("converged");
    // Re-integrate near-optimal solutions to compare their paths.
    let sys = spec.compile();
    let near: Vec<Extremal> = res
        .attempts
        .iter()
        .filter(|a| a.converged && a.cost.is_some_and(|c| (c - value).abs() <= 1e-6))
        .filter_map(|a| endpoint(spec, &sys, &p, &a.lambda0).ok())
        .collect();
    let mut multiple = false;
    'outer: for i in 0..near.len() {
        for j in i + 1..near.len() {
            let d = near[i]
                .states
                .iter()
                .zip(&near[j].states)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max);
            if d > 1e-3 {
                multiple = true;
                break 'outer;
            }
        }
    }
    Ok(ValueResult {
        status: ValueStatus::Reachable,
        value: Some(value),
        lambda0: Some(res.lambda0.clone()),
        multiple_minimizers: multiple,
        converged,
        shooting: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::uniform_grid;

    fn lq() -> SystemSpec {
        SystemSpec::from_json_str(
            r#"{"dimension": 2, "controls": 2, "driftless": true,
                "fields": [["1","0"],["0","1"]],
                "cost": {"U": [["1","0"],["0","1"]], "alpha": ["0","0"], "g": "1"},
                "domain": {"lower": [-1,-1], "upper": [1,1]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn cost_examples() {
        let s = lq();
        let sys = s.compile();
        let times = uniform_grid(2.0, 10);
        let states = vec![vec![0.0, 0.0]; 11];
        let controls = vec![vec![0.0, 0.0]; 11];
        assert!((cost_eval(&sys, &times, &states, &controls).unwrap() - 1.0).abs() < 1e-14);
        let s0 = s.with_cost(crate::system::CostSpec::identity(2));
        assert_eq!(cost_eval(&s0.compile(), &times, &states, &controls).unwrap(), 0.0);
    }

    #[test]
    fn straight_line_shooting() {
        let s = lq().with_cost(crate::system::CostSpec::identity(2));
        let p = ShootingProblem::new(vec![0.0, 0.0], vec![0.6, -0.2], 1.0, vec![vec![0.0, 0.0]]);
        let r = shoot(&s, &p).unwrap();
        assert!(r.converged);
        assert!((r.lambda0[0] - 0.6).abs() < 1e-8 && (r.lambda0[1] + 0.2).abs() < 1e-8);
        assert!((r.cost.unwrap() - 0.2).abs() < 1e-9);
    }
}
