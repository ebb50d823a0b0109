//! Monte-Carlo survey of abnormal extremals on randomly perturbed systems.
//!
//! Each system gets random polynomial perturbations on every field
//! component. Abnormal initial data `(x0, λ0)` are drawn with `λ0` a unit
//! covector annihilating the control fields at `x0`, the singular control
//! is recovered from the Goh data along the way, and every nontrivial
//! extremal that passes the conservation gate is classified.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::goh::{pfaffian, ParityCase};
use crate::lie::{bracket_multiindex, VectorField};
use crate::ode::{OdeError, OdeOptions};
use crate::singular::{analyze, AnalysisOptions, Subject};
use crate::system::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub eps: f64,
    pub degree: u32,
    pub seed: u64,
    pub systems: usize,
    /// Covector samples per system.
    pub samples: usize,
    pub horizon: f64,
    pub intervals: usize,
    pub ode: OdeOptions,
    /// Conservation gate on `max |h_i|` and on the drift of `h_0`.
    pub gate_tol: f64,
    pub expected_corank: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            eps: 0.05,
            degree: 2,
            seed: 1,
            systems: 50,
            samples: 4,
            horizon: 1.0,
            intervals: 200,
            ode: OdeOptions::adaptive(1e-11, 1e-11),
            gate_tol: 1e-6,
            expected_corank: 1,
        }
    }
}

impl PerturbationConfig {
    fn validate(&self) -> Result<()> {
        if self.systems == 0 || self.samples == 0 || self.intervals < 2 {
            return Err(Error::InvalidArgument("survey counts must be at least 1".into()));
        }
        if !(self.eps >= 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("eps must be non-negative and the horizon positive".into()));
        }
        Ok(())
    }
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

/// Exponent tuples of total degree ≤ `d` in `n` variables, graded then
/// lexicographic.
pub fn monomials(n: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=d {
        rec(n, total, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

fn random_polynomial(rng: &mut ChaCha8Rng, monos: &[Vec<u32>], eps: f64) -> Expr {
    let mut p = Expr::zero();
    for mono in monos {
        let c: f64 = rng.random_range(-eps..=eps);
        let mut term = Expr::constant(c);
        for (k, &e) in mono.iter().enumerate() {
            if e > 0 {
                term = term.mul(&Expr::var(k).powi(e));
            }
        }
        p = p.add(&term);
    }
    p
}

/// Adds a random polynomial of degree ≤ `d` with coefficients uniform in
/// `[−ε, ε]` to every component of every field of system `index`.
pub fn perturb_system(spec: &SystemSpec, cfg: &PerturbationConfig, index: usize) -> SystemSpec {
    if cfg.eps == 0.0 {
        return spec.clone();
    }
    let mut rng = stream(cfg.seed, 2 * index as u64);
    let monos = monomials(spec.n, cfg.degree);
    let mut bump = |f: &VectorField| {
        VectorField::new(
            f.components()
                .iter()
                .map(|c| c.add(&random_polynomial(&mut rng, &monos, cfg.eps)))
                .collect(),
        )
    };
    let mut out = spec.clone();
    out.drift = spec.drift.as_ref().map(&mut bump);
    out.controls = spec.controls.iter().map(bump).collect();
    out.name = Some(format!("{}-perturbed-{index}", spec.name.as_deref().unwrap_or("system")));
    out
}

/// Newton projection of `(x, λ)` onto `h_1 = … = h_m = 0` (and the Pfaffian
/// constraint in the augmented parity cases), `|λ| = 1`.
struct Constraints {
    n: usize,
    m: usize,
    first: usize,
    // Control fields, then brackets [f_a, f_b] over the Goh index pairs.
    tape: Tape,
    pairs: Vec<(usize, usize)>,
    pfaffian: bool,
    scratch: Vec<f64>,
    buf: Vec<f64>,
}

impl Constraints {
    fn new(spec: &SystemSpec) -> Result<Self> {
        let case = ParityCase::of(spec);
        let family = spec.family();
        let first = spec.first_index();
        let mut fields: Vec<VectorField> = spec.controls.clone();
        let mut pairs = Vec::new();
        if case.augments() {
            for a in first..=spec.m {
                for b in a + 1..=spec.m {
                    fields.push(bracket_multiindex(&family, &[a, b])?);
                    pairs.push((a, b));
                }
            }
        }
        let tape = Tape::compile(&fields.iter().flat_map(|f| f.components().iter().cloned()).collect::<Vec<_>>());
        let width = fields.len() * spec.n;
        Ok(Constraints {
            n: spec.n,
            m: spec.m,
            first,
            tape,
            pairs,
            pfaffian: case.augments(),
            scratch: Vec::new(),
            buf: vec![0.0; width],
        })
    }

    fn residual(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let (x, l) = z.split_at(n);
        self.tape.eval_into(0.0, x, &mut self.scratch, &mut self.buf)?;
        let dot = |k: usize, buf: &[f64]| (0..n).map(|c| l[c] * buf[k * n + c]).sum::<f64>();
        let mut r: Vec<f64> = (0..self.m).map(|i| dot(i, &self.buf)).collect();
        if self.pfaffian {
            let size = self.m + 1 - self.first;
            let mut g = DMatrix::zeros(size, size);
            for (p, &(a, b)) in self.pairs.iter().enumerate() {
                let v = dot(self.m + p, &self.buf);
                g[(a - self.first, b - self.first)] = v;
                g[(b - self.first, a - self.first)] = -v;
            }
            r.push(pfaffian(&g)?);
        }
        r.push(l.iter().map(|v| v * v).sum::<f64>() - 1.0);
        Ok(r)
    }

    fn project(&mut self, z: &mut [f64]) -> Result<bool> {
        let dim = z.len();
        for _ in 0..60 {
            let r = self.residual(z)?;
            let norm = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if norm < 1e-13 {
                return Ok(true);
            }
            let mut jac = DMatrix::zeros(r.len(), dim);
            for j in 0..dim {
                let h = 1e-7 * (1.0 + z[j].abs());
                let old = z[j];
                z[j] = old + h;
                let rp = self.residual(z)?;
                z[j] = old - h;
                let rm = self.residual(z)?;
                z[j] = old;
                for i in 0..r.len() {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let step = jac
                .svd(true, true)
                .solve(&DVector::from_vec(r), 1e-12)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for (zi, s) in z.iter_mut().zip(step.iter()) {
                *zi -= s;
            }
        }
        let r = self.residual(z)?;
        Ok(r.iter().fold(0.0f64, |a, v| a.max(v.abs())) < 1e-10)
    }
}

/// Unit covector in the annihilator of `f_1(x), …, f_m(x)`.
fn annihilator_sample(spec: &SystemSpec, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Option<Vec<f64>>> {
    let n = spec.n;
    let cols: Vec<Vec<f64>> = spec.controls.iter().map(|f| f.eval(0.0, x)).collect::<std::result::Result<_, _>>()?;
    let b = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let eig = (&b * b.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let dim = n - spec.m;
    let mut l = DVector::zeros(n);
    for &k in order.iter().take(dim) {
        let c: f64 = rng.sample(StandardNormal);
        l += eig.eigenvectors.column(k) * c;
    }
    let norm = l.norm();
    if norm < 1e-12 {
        return Ok(None);
    }
    Ok(Some((l / norm).iter().copied().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Classified {
        minimal_order: bool,
        corank: usize,
        goh: bool,
        goh_vacuous: bool,
        rank_inequality_violations: usize,
        max_h: f64,
        h0_drift: f64,
        path_length: f64,
    },
    /// The extremal stays at a point.
    Trivial { path_length: f64, idep_full: bool },
    BlowUp { message: String },
    RecoveryFailed { message: String },
    GateFailed { max_h: f64, h0_drift: f64 },
    ProjectionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub system: usize,
    pub sample: usize,
    pub x0: Vec<f64>,
    pub lambda0: Vec<f64>,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl SampleRecord {
    /// Classified sample contradicting a generic property.
    pub fn is_counterexample(&self, expected_corank: usize) -> bool {
        match &self.outcome {
            Outcome::Classified {
                minimal_order,
                corank,
                goh,
                goh_vacuous,
                rank_inequality_violations,
                ..
            } => {
                !minimal_order
                    || *corank != expected_corank
                    || (*goh && !goh_vacuous)
                    || *rank_inequality_violations > 0
            }
            _ => false,
        }
    }
}

/// Reproduction data for a counterexample candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub seed: u64,
    pub system: usize,
    pub sample: usize,
    pub spec: serde_json::Value,
    pub x0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurveyCounts {
    pub samples: usize,
    pub classified: usize,
    pub trivial: usize,
    pub blow_ups: usize,
    pub recovery_failures: usize,
    pub gate_failures: usize,
    pub projection_failures: usize,
    pub minimal_order: usize,
    pub corank_expected: usize,
    pub goh: usize,
    /// Goh verdicts that carry information for this parity case.
    pub goh_nonvacuous: usize,
    pub rank_inequality_violations: usize,
    /// Trivial samples whose `I_dep` is not the whole interval.
    pub trivial_idep_mismatch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResult {
    pub config: PerturbationConfig,
    pub base: Option<String>,
    pub case: ParityCase,
    pub counts: SurveyCounts,
    /// Fraction of samples that gave a classified extremal.
    pub coverage: f64,
    pub all_minimal_order: bool,
    pub all_expected_corank: bool,
    pub records: Vec<SampleRecord>,
    pub counterexamples: Vec<Counterexample>,
}

fn outcome_of_error(e: Error) -> Outcome {
    match e {
        Error::Integration(OdeError::BlowUp { .. }) | Error::Integration(OdeError::StepSizeUnderflow { .. }) => {
            Outcome::BlowUp { message: e.to_string() }
        }
        other => Outcome::RecoveryFailed { message: other.to_string() },
    }
}

fn analysis_options(cfg: &PerturbationConfig) -> AnalysisOptions {
    AnalysisOptions {
        horizon: cfg.horizon,
        intervals: cfg.intervals,
        ode: cfg.ode,
        strict_samples: Some(0),
        ..AnalysisOptions::default()
    }
}

fn survey_system(spec: &SystemSpec, cfg: &PerturbationConfig, index: usize) -> Result<Vec<SampleRecord>> {
    let mut rng = stream(cfg.seed, 2 * index as u64 + 1);
    let mut constraints = Constraints::new(spec)?;
    let opts = analysis_options(cfg);
    let scale = spec
        .domain
        .lower
        .iter()
        .zip(&spec.domain.upper)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        .sqrt()
        .max(1.0);
    let mut out = Vec::with_capacity(cfg.samples);
    for sample in 0..cfg.samples {
        let x: Vec<f64> = spec
            .domain
            .lower
            .iter()
            .zip(&spec.domain.upper)
            .map(|(a, b)| rng.random_range(*a..=*b))
            .collect();
        let lambda = annihilator_sample(spec, &x, &mut rng)?;
        let record = |x0: Vec<f64>, lambda0: Vec<f64>, outcome| SampleRecord {
            system: index,
            sample,
            x0,
            lambda0,
            outcome,
        };
        let Some(mut lambda) = lambda else {
            out.push(record(x, vec![], Outcome::ProjectionFailed));
            continue;
        };
        let mut z: Vec<f64> = x.iter().chain(&lambda).copied().collect();
        let projected = constraints.project(&mut z).unwrap_or(false);
        let inside = z[..spec.n]
            .iter()
            .zip(spec.domain.lower.iter().zip(&spec.domain.upper))
            .all(|(v, (a, b))| v >= a && v <= b);
        if !projected || !inside {
            out.push(record(z[..spec.n].to_vec(), z[spec.n..].to_vec(), Outcome::ProjectionFailed));
            continue;
        }
        let x0 = z[..spec.n].to_vec();
        lambda.copy_from_slice(&z[spec.n..]);
        let subject = Subject::Abnormal { x0: x0.clone(), lambda0: lambda.clone() };
        let outcome = match analyze(spec, &subject, &opts) {
            Err(e) => outcome_of_error(e),
            Ok(rep) => {
                let e = rep.extremal.as_ref().expect("abnormal subjects carry their extremal");
                let len = e.path_length();
                let check = rep.abnormal_check.expect("abnormal subjects are checked");
                if len < 1e-8 * cfg.horizon * scale {
                    Outcome::Trivial {
                        path_length: len,
                        idep_full: rep.idep.indices.len() == e.len(),
                    }
                } else if check.max_h > cfg.gate_tol || check.h0_drift > cfg.gate_tol {
                    Outcome::GateFailed { max_h: check.max_h, h0_drift: check.h0_drift }
                } else if let Some(err) = rep.recovery_error {
                    Outcome::RecoveryFailed { message: err }
                } else {
                    let order = rep.order.expect("abnormal subjects are classified");
                    Outcome::Classified {
                        minimal_order: order.minimal_order,
                        corank: rep.corank,
                        goh: order.goh,
                        goh_vacuous: order.goh_vacuous,
                        rank_inequality_violations: order.rank_inequality_violations,
                        max_h: check.max_h,
                        h0_drift: check.h0_drift,
                        path_length: len,
                    }
                }
            }
        };
        out.push(record(x0, lambda, outcome));
    }
    Ok(out)
}

/// Perturbs `spec` `cfg.systems` times and classifies sampled abnormal
/// extremals. Results are ordered by (system, sample).
pub fn survey_singulars(spec: &SystemSpec, cfg: &PerturbationConfig) -> Result<SurveyResult> {
    cfg.validate()?;
    let systems: Vec<SystemSpec> = (0..cfg.systems).map(|s| perturb_system(spec, cfg, s)).collect();
    let per: Vec<Vec<SampleRecord>> = systems
        .par_iter()
        .enumerate()
        .map(|(s, sys)| survey_system(sys, cfg, s))
        .collect::<Result<_>>()?;
    let records: Vec<SampleRecord> = per.into_iter().flatten().collect();
    let mut c = SurveyCounts { samples: records.len(), ..Default::default() };
    for r in &records {
        match &r.outcome {
            Outcome::Classified {
                minimal_order,
                corank,
                goh,
                goh_vacuous,
                rank_inequality_violations,
                ..
            } => {
                c.classified += 1;
                c.minimal_order += *minimal_order as usize;
                c.corank_expected += (*corank == cfg.expected_corank) as usize;
                c.goh += *goh as usize;
                c.goh_nonvacuous += (*goh && !goh_vacuous) as usize;
                c.rank_inequality_violations += rank_inequality_violations;
            }
            Outcome::Trivial { idep_full, .. } => {
                c.trivial += 1;
                c.trivial_idep_mismatch += !idep_full as usize;
            }
            Outcome::BlowUp { .. } => c.blow_ups += 1,
            Outcome::RecoveryFailed { .. } => c.recovery_failures += 1,
            Outcome::GateFailed { .. } => c.gate_failures += 1,
            Outcome::ProjectionFailed => c.projection_failures += 1,
        }
    }
    let counterexamples = records
        .iter()
        .filter(|r| r.is_counterexample(cfg.expected_corank))
        .map(|r| Counterexample {
            seed: cfg.seed,
            system: r.system,
            sample: r.sample,
            spec: systems[r.system].to_json(),
            x0: r.x0.clone(),
            lambda0: r.lambda0.clone(),
            outcome: r.outcome.clone(),
        })
        .collect();
    Ok(SurveyResult {
        config: *cfg,
        base: spec.name.clone(),
        case: ParityCase::of(spec),
        coverage: c.classified as f64 / c.samples as f64,
        all_minimal_order: c.minimal_order == c.classified,
        all_expected_corank: c.corank_expected == c.classified,
        counts: c,
        records,
        counterexamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(4, 2).len(), 15);
        assert_eq!(monomials(2, 0), vec![vec![0, 0]]);
        assert_eq!(monomials(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn zero_eps_is_identity() {
        let s = SystemSpec::from_json_str(
            r#"{"dimension": 3, "controls": 2, "driftless": true,
                "fields": [["1","0","0"],["0","1","x1^2/2"]],
                "domain": {"lower": [-1,-1,-1], "upper": [1,1,1]}}"#,
        )
        .unwrap();
        let cfg = PerturbationConfig { eps: 0.0, ..Default::default() };
        assert_eq!(perturb_system(&s, &cfg, 3).to_json(), s.to_json());
    }
}
