//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 configuration error,
//! 3 numerical divergence, 4 validation failure. Every error is also printed
//! to stderr as one JSON object.

use std::ffi::OsString;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::chaos::chaos_sweep;
use crate::config::{Experiment, ExperimentConfig};
use crate::engine::solve_n_particle;
use crate::error::{Error, Result};
use crate::fields::{estimate_lipschitz, validate_geometry, BuiltinField};
use crate::meanfield::fixed_point;
use crate::oracle::{hungarian, transport_lp_bruteforce, BRUTEFORCE_MAX_SIDE};
use crate::transport::{uniform_transport, CostMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

pub const THREADS_ENV: &str = "MEANFIELD_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "meanfield-lab", version, about = "Interacting-agent simulations and their mean-field limit")]
struct Cli {
    /// Worker threads (default: logical cores). Overridden by MEANFIELD_LAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the N-agent system and write its trajectories as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for the mean-field law; writes the law CSV and `<stem>.report.json`.
    Meanfield {
        #[command(flatten)]
        common: Common,
        /// Law CSV.
        #[arg(long)]
        out: PathBuf,
        /// Stop once the gap between iterates is at most this.
        #[arg(long)]
        tol: Option<f64>,
        /// Most applications of the solution map.
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Propagation-of-chaos sweep; writes a per-cell CSV and `<stem>.summary.json`.
    Chaos {
        #[command(flatten)]
        common: Common,
        /// Per-cell CSV.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated agent counts, e.g. 8,16,32.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Repetitions per agent count.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Check the geometric condition and estimate Lipschitz constants.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Probe count for the geometric check.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Cross-check the production transport solver against both oracles.
    OracleCheck {
        /// Largest side of the random instances.
        #[arg(long, default_value_t = 6)]
        max_side: usize,
        /// Number of random instances.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Instance generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Perturbs one cost entry after the production solve (negative control).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

/// An error bound for the process exit, with context for the JSON report.
struct Failure {
    error: Error,
    config: Option<PathBuf>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure { error, config: None }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Input(_) | Error::Contract(_) => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Geometry { .. } => EXIT_VALIDATION,
        Error::Io(_) | Error::Internal(_) => EXIT_FAILURE,
    }
}

fn error_report(f: &Failure) -> serde_json::Value {
    let mut report = json!({
        "error": f.error.kind(),
        "message": f.error.to_string(),
        "exit_code": exit_code(&f.error),
    });
    if let Some(path) = &f.config {
        report["config"] = json!(path.display().to_string());
    }
    match &f.error {
        Error::Divergence { agent, step, last_finite } => {
            report["agent"] = json!(agent);
            report["step"] = json!(step);
            if let Some(e) = last_finite {
                report["last_finite"] = serde_json::to_value(e.as_ref()).unwrap_or_default();
            }
        }
        Error::Geometry { position, strategy, entry, value } => {
            report["position"] = json!(position);
            report["strategy"] = json!(strategy);
            report["entry"] = json!(entry);
            report["value"] = json!(value);
        }
        _ => {}
    }
    report
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .or(cli.threads);
    match with_threads(threads, || dispatch(cli.command)) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", error_report(&f));
            exit_code(&f.error)
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: Option<usize>, job: impl FnOnce() -> R + Send) -> R {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R: Send>(_threads: Option<usize>, job: impl FnOnce() -> R + Send) -> R {
    job()
}

fn load(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config)
        .map_err(|error| Failure { error, config: Some(common.config.clone()) })?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn runnable_field(cfg: &ExperimentConfig, path: &Path) -> std::result::Result<BuiltinField, Failure> {
    let field = cfg
        .build_field()
        .and_then(|f| f.check_ranges().map(|_| f))
        .map_err(|error| Failure { error, config: Some(path.to_path_buf()) })?;
    Ok(field)
}

fn dispatch(command: Command) -> std::result::Result<i32, Failure> {
    match command {
        Command::Simulate { common, out } => simulate(&common, &out),
        Command::Meanfield { common, out, tol, max_iter } => meanfield(&common, &out, tol, max_iter),
        Command::Chaos { common, out, n_grid, reps } => chaos(&common, &out, n_grid, reps),
        Command::Validate { common, out, samples } => validate(&common, out.as_deref(), samples),
        Command::OracleCheck { max_side, instances, seed, out, inject_fault } => {
            oracle_check(max_side, instances, seed, out.as_deref(), inject_fault)
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

/// `law.csv` -> `law.<suffix>.json`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(format!("{suffix}.json"))
}

fn summary(value: serde_json::Value) {
    println!("{value}");
}

fn simulate(common: &Common, out: &Path) -> std::result::Result<i32, Failure> {
    let cfg = load(common)?;
    let field = runnable_field(&cfg, &common.config)?;
    let sim = cfg.sim_config();
    let init = cfg.init.sample_ensemble(sim.seed, sim.agents, cfg.space.len())?;
    let bundle = solve_n_particle(&init, &field, &sim)?;
    write_atomic(out, |w| bundle.write_csv(w))?;
    summary(json!({
        "command": "simulate",
        "seed": sim.seed,
        "agents": sim.agents,
        "steps": sim.steps,
        "rows": bundle.paths() * bundle.times().len(),
        "out": out.display().to_string(),
    }));
    Ok(EXIT_OK)
}

fn meanfield(
    common: &Common,
    out: &Path,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> std::result::Result<i32, Failure> {
    let cfg = load(common)?;
    let field = runnable_field(&cfg, &common.config)?;
    let (cfg_tol, cfg_iter) = match cfg.experiment.clone() {
        Experiment::Meanfield { tol, max_iter } => (tol, max_iter),
        _ => (1e-3, 20),
    };
    let (tol, max_iter) = (tol.unwrap_or(cfg_tol), max_iter.unwrap_or(cfg_iter));
    let sim = cfg.sim_config();
    let (law, report) = fixed_point(&field, &cfg.init, &cfg.space, &sim, tol, max_iter)?;
    write_atomic(out, |w| law.bundle.write_csv(w))?;
    let report_path = sidecar(out, "report");
    write_json(&report_path, &json!({ "command": "meanfield", "seed": sim.seed, "report": report }))?;
    summary(json!({
        "command": "meanfield",
        "seed": sim.seed,
        "iterations": report.iterations,
        "converged": report.converged,
        "last_gap": report.gaps.last(),
        "out": out.display().to_string(),
        "report": report_path.display().to_string(),
    }));
    Ok(EXIT_OK)
}

fn chaos(
    common: &Common,
    out: &Path,
    n_grid: Option<Vec<usize>>,
    reps: Option<usize>,
) -> std::result::Result<i32, Failure> {
    let cfg = load(common)?;
    let field = runnable_field(&cfg, &common.config)?;
    let (grid, cfg_reps, law_size, tol, max_iter) = match cfg.experiment.clone() {
        Experiment::Chaos { n_grid, reps, law_size, tol, max_iter } => (n_grid, reps, law_size, tol, max_iter),
        _ => (vec![8, 16, 32, 64, 128], 64, None, 1e-3, 20),
    };
    let grid = n_grid.unwrap_or(grid);
    let reps = reps.unwrap_or(cfg_reps);
    let max_n = *grid.iter().max().ok_or_else(|| Error::Config("empty N grid".into()))?;
    let mut law_cfg = cfg.sim_config();
    law_cfg.agents = law_size.unwrap_or(4 * max_n);
    law_cfg.record_stride = 1;
    let (law, law_report) = fixed_point(&field, &cfg.init, &cfg.space, &law_cfg, tol, max_iter)?;
    let sweep = chaos_sweep(&field, &law_cfg, &cfg.init, &law, &cfg.space, &grid, reps, cfg.seed)?;
    write_atomic(out, |w| {
        writeln!(w, "N,rep,err,wall_ms")?;
        for c in &sweep.cells {
            let err = c.err.map(|e| e.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", c.n, c.rep, err, c.wall_ms)?;
        }
        Ok(())
    })?;
    let per_n: Vec<_> = sweep
        .results
        .iter()
        .map(|r| {
            json!({
                "N": r.n,
                "mean": r.err,
                "stderr": r.stderr,
                "max_agent_mean": r.max_agent_mean,
                "failures": r.failures,
            })
        })
        .collect();
    let failed: Vec<_> = sweep.cells.iter().filter(|c| c.error.is_some()).collect();
    let summary_path = sidecar(out, "summary");
    write_json(
        &summary_path,
        &json!({
            "command": "chaos",
            "seed": sweep.seed,
            "reps": reps,
            "slope": sweep.slope,
            "intercept": sweep.intercept,
            "per_n": per_n,
            "failed_cells": failed,
            "law": law_report,
        }),
    )?;
    summary(json!({
        "command": "chaos",
        "seed": sweep.seed,
        "slope": sweep.slope,
        "out": out.display().to_string(),
        "summary": summary_path.display().to_string(),
    }));
    Ok(EXIT_OK)
}

fn validate(common: &Common, out: Option<&Path>, samples: Option<usize>) -> std::result::Result<i32, Failure> {
    let cfg = load(common)?;
    let field = cfg.build_field().map_err(|error| Failure { error, config: Some(common.config.clone()) })?;
    let (cfg_samples, pairs) = match cfg.experiment.clone() {
        Experiment::Validate { samples, pairs } => (samples, pairs),
        _ => (10_000, 1_000),
    };
    let samples = samples.unwrap_or(cfg_samples);
    let sampler = cfg.probe_sampler();
    let geometry = validate_geometry(&field, &sampler, samples, cfg.seed)?;
    let lipschitz = estimate_lipschitz(&field, &sampler, &cfg.space, pairs, cfg.seed)?;
    let report = json!({
        "command": "validate",
        "seed": cfg.seed,
        "field": field.spec().name(),
        "passed": geometry.passed,
        "geometry": geometry,
        "lipschitz": lipschitz,
    });
    match out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    if geometry.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "{}",
            json!({
                "error": "validation",
                "message": format!(
                    "geometric condition fails at {} of {} probes (worst margin {:e})",
                    geometry.failures, geometry.samples, geometry.worst_margin
                ),
                "exit_code": EXIT_VALIDATION,
                "counterexample": geometry.counterexample,
            })
        );
        Ok(EXIT_VALIDATION)
    }
}

#[derive(Debug, Clone, Serialize)]
struct OracleInstance {
    index: usize,
    rows: usize,
    cols: usize,
    cost: Vec<f64>,
    production: f64,
    bruteforce: f64,
    hungarian: Option<f64>,
    discrepancy: f64,
}

const ORACLE_TOL: f64 = 1e-9;

fn oracle_check(
    max_side: usize,
    instances: usize,
    seed: u64,
    out: Option<&Path>,
    inject_fault: bool,
) -> std::result::Result<i32, Failure> {
    if max_side == 0 || max_side > BRUTEFORCE_MAX_SIDE {
        return Err(Error::Config(format!("max_side must lie in 1..={BRUTEFORCE_MAX_SIDE}, got {max_side}")).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<OracleInstance> = None;
    for index in 0..instances {
        // Even-numbered instances are square so the Hungarian oracle applies.
        let rows = rng.random_range(1..=max_side);
        let cols = if index % 2 == 0 { rows } else { rng.random_range(1..=max_side) };
        let mut cost = CostMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())?;
        let production = uniform_transport(&cost)?;
        if inject_fault && index == 0 {
            let (_, assignment) = hungarian(&cost)?;
            let cell = assignment[0];
            cost.entries_mut()[cell] += 1.0;
        }
        let a = vec![1.0 / rows as f64; rows];
        let b = vec![1.0 / cols as f64; cols];
        let brute = transport_lp_bruteforce(&cost, &a, &b)?;
        let hung = if cost.is_square() { Some(hungarian(&cost)?.0 / rows as f64) } else { None };
        let discrepancy = (production - brute).abs().max(hung.map_or(0.0, |h| (production - h).abs()));
        if worst.as_ref().is_none_or(|w| discrepancy > w.discrepancy) {
            worst = Some(OracleInstance {
                index,
                rows,
                cols,
                cost: cost.entries().to_vec(),
                production,
                bruteforce: brute,
                hungarian: hung,
                discrepancy,
            });
        }
    }
    let passed = worst.as_ref().is_none_or(|w| w.discrepancy <= ORACLE_TOL);
    let report = json!({
        "command": "oracle-check",
        "seed": seed,
        "instances": instances,
        "max_side": max_side,
        "tolerance": ORACLE_TOL,
        "passed": passed,
        "worst": worst,
    });
    match out {
        Some(path) => write_json(path, &report)?,
        None => println!("{report}"),
    }
    if passed {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "{}",
            json!({
                "error": "validation",
                "message": "production transport disagrees with the oracles",
                "exit_code": EXIT_VALIDATION,
                "worst": worst,
            })
        );
        Ok(EXIT_VALIDATION)
    }
}
