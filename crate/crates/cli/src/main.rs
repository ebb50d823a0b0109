use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use singtraj::extremal::integrate_extremal;
use singtraj::genericity::{survey_singulars, PerturbationConfig};
use singtraj::goh::{recover_singular_control, GohOptions, GohSystem, SingularControlLaw};
use singtraj::hjb::{solve_hjb_2d, HjbConfig};
use singtraj::lie::{idep_of_trajectory, DEFAULT_RANK_TOL};
use singtraj::ocp::value_at;
use singtraj::ode::{integrate, uniform_grid, OdeOptions};
use singtraj::singular::{
    abnormal_check, analyze, larc_check, verify_idep_stationarity, AnalysisOptions, Subject, DEFAULT_STRICT_TOL,
};
use singtraj::system::SystemSpec;

#[derive(Parser, Debug)]
#[command(name = "singtraj", version, about = "Singular trajectories of control-affine systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// System spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    /// Grid intervals on [0, T].
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[arg(long = "tol-rank", default_value_t = DEFAULT_RANK_TOL)]
    tol_rank: f64,
    #[arg(long = "tol-strict", default_value_t = DEFAULT_STRICT_TOL)]
    tol_strict: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for the report, manifest and other artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed-step RK4 with this many substeps per grid interval.
    #[arg(long = "fixed-step")]
    fixed_step: Option<usize>,
    /// Exit with status 2 on a negative verdict.
    #[arg(long)]
    fatal: bool,
}

impl Common {
    fn ode(&self, default: OdeOptions) -> OdeOptions {
        self.fixed_step.map(OdeOptions::fixed).unwrap_or(default)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Singularity report for an abnormal extremal or a constant-control trajectory.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<String>,
        /// Initial covector of an abnormal extremal.
        #[arg(long, conflicts_with = "control")]
        abnormal: Option<String>,
        /// Constant control.
        #[arg(long)]
        control: Option<String>,
    },
    /// Singular control of an abnormal extremal via the Goh matrices.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        abnormal: String,
    },
    /// Normal shooting to a target.
    Shoot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 16)]
        starts: usize,
    },
    /// Value estimates at several targets (`x,y;x,y;…`).
    ValueSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        targets: String,
        #[arg(long, default_value_t = 16)]
        starts: usize,
    },
    /// Hamilton-Jacobi grid solve in the plane.
    Hjb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        lower: String,
        #[arg(long)]
        upper: String,
        #[arg(long, default_value_t = 201)]
        n: usize,
        /// Nodes along y (default: same as `--n`).
        #[arg(long)]
        ny: Option<usize>,
        /// Initial well width, one value or one per axis.
        #[arg(long, default_value = "0.015")]
        eps: String,
        #[arg(long, default_value = "0,0")]
        frame: String,
        #[arg(long, default_value_t = 1e6)]
        cap: f64,
        #[arg(long, default_value_t = 50.0)]
        clamp: f64,
        #[arg(long, default_value_t = 0.9)]
        cfl: f64,
        /// Probe points `x,y;x,y;…`.
        #[arg(long)]
        probe: Option<String>,
    },
    /// Genericity survey over perturbed systems.
    Survey {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 2)]
        deg: u32,
        #[arg(long, default_value_t = 50)]
        nsys: usize,
        #[arg(long, default_value_t = 4)]
        samples: usize,
    },
    /// Dependence set and stationarity of a constant-control trajectory.
    IdepCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        control: String,
    },
    /// Bracket-generating check at sampled points.
    Larc {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 16)]
        points: usize,
        #[arg(long = "max-len", default_value_t = 4)]
        max_len: usize,
    },
    /// Rerun a previous invocation from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the new run (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> Option<&Common> {
        match self {
            Command::Analyze { common, .. }
            | Command::Recover { common, .. }
            | Command::Shoot { common, .. }
            | Command::ValueSweep { common, .. }
            | Command::Hjb { common, .. }
            | Command::Survey { common, .. }
            | Command::IdepCheck { common, .. }
            | Command::Larc { common, .. } => Some(common),
            Command::Rerun { .. } => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Analyze { .. } => "analyze",
            Command::Recover { .. } => "recover",
            Command::Shoot { .. } => "shoot",
            Command::ValueSweep { .. } => "value-sweep",
            Command::Hjb { .. } => "hjb",
            Command::Survey { .. } => "survey",
            Command::IdepCheck { .. } => "idep-check",
            Command::Larc { .. } => "larc",
            Command::Rerun { .. } => "rerun",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    command: String,
    /// Arguments after the program name, enough to rerun.
    args: Vec<String>,
    spec_path: String,
    /// The spec as loaded, so the manifest alone reproduces the run.
    spec: Value,
    parameters: Value,
    tool_version: String,
    wall_clock_seconds: f64,
    artifacts: Vec<String>,
}

type CliResult<T> = Result<T, String>;

fn parse_vec(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("--{what}: cannot parse {p:?}: {e}")))
        .collect()
}

fn parse_points(s: &str, what: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(|p| parse_vec(p, what)).collect()
}

fn pair(v: Vec<f64>, what: &str) -> CliResult<[f64; 2]> {
    match v.as_slice() {
        [a] => Ok([*a, *a]),
        [a, b] => Ok([*a, *b]),
        _ => Err(format!("--{what}: expected one or two numbers")),
    }
}

fn dims(v: Vec<f64>, n: usize, what: &str) -> CliResult<Vec<f64>> {
    if v.len() != n {
        return Err(format!("--{what}: expected {n} numbers, got {}", v.len()));
    }
    Ok(v)
}

fn initial_state(x0: &Option<String>, spec: &SystemSpec) -> CliResult<Vec<f64>> {
    match x0 {
        Some(s) => dims(parse_vec(s, "x0")?, spec.n, "x0"),
        None => Ok(vec![0.0; spec.n]),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Outcome {
    report: Value,
    parameters: Value,
    negative: bool,
    extra: Vec<(String, Box<dyn FnOnce(&Path) -> CliResult<()>>)>,
}

fn run(cmd: &Command, spec: &SystemSpec) -> CliResult<Outcome> {
    let plain = |report: Value, parameters: Value, negative: bool| Outcome {
        report,
        parameters,
        negative,
        extra: Vec::new(),
    };
    match cmd {
        Command::Analyze { common, x0, abnormal, control } => {
            let x0 = initial_state(x0, spec)?;
            let subject = match (abnormal, control) {
                (Some(l), None) => Subject::Abnormal { x0, lambda0: dims(parse_vec(l, "abnormal")?, spec.n, "abnormal")? },
                (None, Some(u)) => Subject::Control { x0, control: dims(parse_vec(u, "control")?, spec.m, "control")? },
                _ => return Err("analyze needs exactly one of --abnormal or --control".into()),
            };
            let mut opts = AnalysisOptions {
                horizon: common.horizon,
                intervals: common.grid,
                corank_tol: AnalysisOptions::default().corank_tol,
                strict_tol: common.tol_strict,
                idep_tol: common.tol_rank,
                ..AnalysisOptions::default()
            };
            opts.goh.rank_tol = common.tol_rank;
            opts.ode = common.ode(opts.ode);
            let rep = analyze(spec, &subject, &opts).map_err(err)?;
            let negative = !rep.singular;
            Ok(plain(
                json!({ "subject": subject, "analysis": rep }),
                serde_json::to_value(opts).map_err(err)?,
                negative,
            ))
        }
        Command::Recover { common, x0, abnormal } => {
            let x0 = initial_state(x0, spec)?;
            let l0 = dims(parse_vec(abnormal, "abnormal")?, spec.n, "abnormal")?;
            let goh = GohSystem::new(spec).map_err(err)?;
            let gopts = GohOptions { rank_tol: common.tol_rank, ..GohOptions::default() };
            let ode = common.ode(OdeOptions::adaptive(1e-11, 1e-11));
            let sys = spec.compile();
            let mut law = SingularControlLaw::new(&goh, gopts);
            let e = integrate_extremal(spec, &sys, &x0, &l0, 0.0, common.horizon, common.grid, Some(&mut law), &ode)
                .map_err(err)?;
            let rec = recover_singular_control(&goh, &e, &gopts).map_err(err)?;
            let check = abnormal_check(&sys, &e).map_err(err)?;
            let sup = rec.controls.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            Ok(plain(
                json!({
                    "case": goh.case,
                    "control_sup": sup,
                    "abnormal_check": check,
                    "recovered": rec,
                    "final_state": e.final_state(),
                }),
                json!({ "goh": gopts, "ode": ode, "horizon": common.horizon, "grid": common.grid }),
                false,
            ))
        }
        Command::Shoot { common, x0, target, starts } => {
            let x0 = initial_state(x0, spec)?;
            let target = dims(parse_vec(target, "target")?, spec.n, "target")?;
            let ode = common.ode(OdeOptions::fixed(4));
            let v = value_at(spec, &x0, common.horizon, &target, *starts, common.seed, Some(ode)).map_err(err)?;
            let negative = v.value.is_none();
            Ok(plain(
                serde_json::to_value(&v).map_err(err)?,
                json!({ "x0": x0, "target": target, "starts": starts, "seed": common.seed, "ode": ode, "horizon": common.horizon }),
                negative,
            ))
        }
        Command::ValueSweep { common, x0, targets, starts } => {
            let x0 = initial_state(x0, spec)?;
            let ode = common.ode(OdeOptions::fixed(4));
            let mut rows = Vec::new();
            let mut negative = false;
            for t in parse_points(targets, "targets")? {
                let t = dims(t, spec.n, "targets")?;
                let v = value_at(spec, &x0, common.horizon, &t, *starts, common.seed, Some(ode)).map_err(err)?;
                negative |= v.value.is_none();
                rows.push(json!({
                    "target": t,
                    "status": v.status,
                    "value": v.value,
                    "lambda0": v.lambda0,
                    "converged": v.converged,
                    "multiple_minimizers": v.multiple_minimizers,
                }));
            }
            Ok(plain(
                json!({ "values": rows }),
                json!({ "x0": x0, "starts": starts, "seed": common.seed, "ode": ode, "horizon": common.horizon }),
                negative,
            ))
        }
        Command::Hjb { common, x0, lower, upper, n, ny, eps, frame, cap, clamp, cfl, probe } => {
            let x0 = initial_state(x0, spec)?;
            if spec.n != 2 {
                return Err(format!("hjb needs a planar system, spec has dimension {}", spec.n));
            }
            let cfg = HjbConfig {
                lower: pair(parse_vec(lower, "lower")?, "lower")?,
                upper: pair(parse_vec(upper, "upper")?, "upper")?,
                nx: *n,
                ny: ny.unwrap_or(*n),
                horizon: common.horizon,
                x0: [x0[0], x0[1]],
                eps: pair(parse_vec(eps, "eps")?, "eps")?,
                cap: *cap,
                cfl: *cfl,
                clamp: *clamp,
                frame: pair(parse_vec(frame, "frame")?, "frame")?,
                snapshots: 0,
            };
            let grid = solve_hjb_2d(spec, &cfg).map_err(err)?;
            let probes: Vec<Value> = match probe {
                Some(p) => parse_points(p, "probe")?
                    .into_iter()
                    .map(|q| {
                        let q = pair(q, "probe")?;
                        Ok(json!({
                            "point": q,
                            "value": grid.value_at(q),
                            "outside_contamination": grid.outside_contamination(q),
                        }))
                    })
                    .collect::<CliResult<_>>()?,
                None => Vec::new(),
            };
            let mut meta = grid.metadata();
            meta["probes"] = Value::Array(probes);
            let parameters = serde_json::to_value(&cfg).map_err(err)?;
            Ok(Outcome {
                report: meta,
                parameters,
                negative: false,
                extra: vec![(
                    "grid.csv".to_string(),
                    Box::new(move |p: &Path| grid.write_csv(p).map_err(err)),
                )],
            })
        }
        Command::Survey { common, eps, deg, nsys, samples } => {
            let mut cfg = PerturbationConfig {
                eps: *eps,
                degree: *deg,
                seed: common.seed,
                systems: *nsys,
                samples: *samples,
                horizon: common.horizon,
                intervals: common.grid,
                ..PerturbationConfig::default()
            };
            cfg.ode = common.ode(cfg.ode);
            let r = survey_singulars(spec, &cfg).map_err(err)?;
            let negative = !r.counterexamples.is_empty();
            Ok(plain(serde_json::to_value(&r).map_err(err)?, serde_json::to_value(cfg).map_err(err)?, negative))
        }
        Command::IdepCheck { common, x0, control } => {
            let x0 = initial_state(x0, spec)?;
            let u = dims(parse_vec(control, "control")?, spec.m, "control")?;
            let sys = spec.compile();
            let ode = common.ode(OdeOptions::adaptive(1e-11, 1e-11));
            let times = uniform_grid(common.horizon, common.grid);
            let mut rhs = |t: f64, x: &[f64], dx: &mut [f64]| -> singtraj::Result<()> {
                dx.copy_from_slice(&sys.velocity(t, x, &u)?);
                Ok(())
            };
            let states = integrate(&mut rhs, &x0, &times, &ode).map_err(err)?;
            let controls = vec![u.clone(); times.len()];
            let idep = idep_of_trajectory(spec, &times, &states, common.tol_rank).map_err(err)?;
            let st = verify_idep_stationarity(&sys, &times, &states, &controls, &idep, 1e-6).map_err(err)?;
            let negative = !st.pass;
            Ok(plain(
                json!({ "idep": idep, "stationarity": st, "measure": idep.measure() }),
                json!({ "x0": x0, "control": u, "ode": ode, "tol_rank": common.tol_rank }),
                negative,
            ))
        }
        Command::Larc { common, points, max_len } => {
            let pts = spec.sample_points(*points, common.seed);
            let r = larc_check(spec, &pts, *max_len, common.tol_rank).map_err(err)?;
            let negative = !r.holds;
            Ok(plain(
                serde_json::to_value(&r).map_err(err)?,
                json!({ "points": points, "max_len": max_len, "seed": common.seed, "tol_rank": common.tol_rank }),
                negative,
            ))
        }
        Command::Rerun { .. } => unreachable!("rerun is resolved before dispatch"),
    }
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(err)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn execute(args: Vec<String>, spec_override: Option<SystemSpec>, out_override: Option<Option<PathBuf>>) -> CliResult<bool> {
    let cli = Cli::try_parse_from(std::iter::once("singtraj".to_string()).chain(args.iter().cloned()))
        .map_err(|e| e.to_string())?;
    if let Command::Rerun { manifest, out } = &cli.command {
        let text = std::fs::read_to_string(manifest).map_err(|e| format!("{}: {e}", manifest.display()))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", manifest.display()))?;
        let spec = SystemSpec::from_json(&m.spec).map_err(err)?;
        return execute(m.args, Some(spec), Some(out.clone()));
    }
    let common = cli.command.common().expect("non-rerun commands carry common flags");
    if let Some(j) = common.jobs {
        // Only the first call can size the global pool; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let spec = match spec_override {
        Some(s) => s,
        None => SystemSpec::from_path(&common.spec).map_err(|e| format!("{}: {e}", common.spec.display()))?,
    };
    let out_dir = match out_override {
        Some(o) => o,
        None => common.out.clone(),
    };
    let start = Instant::now();
    let outcome = run(&cli.command, &spec)?;
    let elapsed = start.elapsed().as_secs_f64();
    match &out_dir {
        None => {
            let text = serde_json::to_string_pretty(&outcome.report).map_err(err)?;
            // A closed pipe (`| head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            let mut artifacts = vec!["report.json".to_string()];
            write_json(&dir.join("report.json"), &outcome.report)?;
            for (name, write) in outcome.extra {
                write(&dir.join(&name))?;
                artifacts.push(name);
            }
            let manifest = RunManifest {
                command: cli.command.name().to_string(),
                args: args.clone(),
                spec_path: common.spec.display().to_string(),
                spec: spec.to_json(),
                parameters: outcome.parameters,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                wall_clock_seconds: elapsed,
                artifacts,
            };
            write_json(&dir.join("manifest.json"), &serde_json::to_value(&manifest).map_err(err)?)?;
            eprintln!("{}: wrote {} ({elapsed:.2} s)", cli.command.name(), dir.join("report.json").display());
        }
    }
    Ok(outcome.negative && common.fatal)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let wants_help = args.iter().any(|a| a == "--help" || a == "-h" || a == "--version" || a == "-V") || args.is_empty();
    if wants_help {
        // Let clap print help or version and pick the exit code.
        Cli::parse();
    }
    match execute(args, None, None) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
