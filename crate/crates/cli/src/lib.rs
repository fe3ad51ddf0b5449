//! Run manifests, command dispatch and exit codes for the `fracgreen` CLI.
//!
//! ```text
//! fracgreen <solve|verify|sweep|boundary|stability> --spec <path> --out <dir> [--seed k] [--set key=value ...]
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use fracgreen_core::boundary::{fractional_normal_test, lift_measure, solve_concentrated};
use fracgreen_core::harness::{critical_sweep, stability_experiment, StabilityConfig, SweepConfig, TestBattery};
use fracgreen_core::{
    build_green, parse_spec_with_overrides, GreenRoute, GreenTable, GridField, Solution, SolverContext, ValidatedProblem,
};

pub mod verify;

pub use verify::{Gate, VerifyReport};

/// Levels of the boundary-concentration schedule; the last one is used when
/// `solve` or `verify` meets a spec with an `eta` measure.
pub const BOUNDARY_SCHEDULE: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    /// I/O failures and internal inconsistencies.
    pub const INTERNAL: i32 = 1;
    /// Malformed spec, invalid parameters or unmet preconditions.
    pub const SPEC: i32 = 2;
    /// The smallness function has no root.
    pub const SMALLNESS: i32 = 3;
    /// Picard iteration or the boundary sequence failed to converge.
    pub const NON_CONVERGENCE: i32 = 4;
    /// `verify` ran and at least one gate failed.
    pub const VERIFICATION: i32 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Verify,
    Sweep,
    Boundary,
    Stability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    pub spec_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// `--set key=value` pairs, `key` a dotted path into the spec.
    pub overrides: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: Command, spec_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self { command, spec_path: spec_path.into(), out_dir: out_dir.into(), seed: 0, overrides: Vec::new() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_override(mut self, key: &str, value: &str) -> Self {
        self.overrides.push((key.into(), value.into()));
        self
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] fracgreen_core::Error),

    #[error("cannot {action} {}: {source}", path.display())]
    Io { action: &'static str, path: PathBuf, source: std::io::Error },

    #[error("verification failed: {}", failed.join(", "))]
    Verification { failed: Vec<String> },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(e) => core_exit_code(e),
            RunError::Io { .. } => exit::INTERNAL,
            RunError::Verification { .. } => exit::VERIFICATION,
        }
    }
}

/// Exit code for a library error.
pub fn core_exit_code(err: &fracgreen_core::Error) -> i32 {
    use fracgreen_core::Error::*;
    match err {
        OrderOutOfRange { .. }
        | UnsupportedDimension(..)
        | Supercritical { .. }
        | InvalidParameter { .. }
        | NegativeMass { .. }
        | ExteriorSupport { .. }
        | InteriorSupport { .. }
        | BoundarySupport { .. }
        | GridTooCoarse { .. }
        | GridMismatch { .. }
        | NotExterior(_)
        | WrongSupport(..)
        | LevelOutOfRange { .. }
        | BadSchedule
        | Precondition(_)
        | Schema { .. } => exit::SPEC,
        NoRoot { .. } => exit::SMALLNESS,
        NonConvergence { .. } | BallEscape { .. } | DivergingSequence(_) => exit::NON_CONVERGENCE,
        KernelSingularity(_) | SingularSystem | RouteInconsistency { .. } => exit::INTERNAL,
    }
}

/// Files written by a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub type RunResult<T> = std::result::Result<T, RunError>;

fn io_err<'a>(action: &'static str, path: &'a Path) -> impl FnOnce(std::io::Error) -> RunError + 'a {
    move |source| RunError::Io { action, path: path.to_path_buf(), source }
}

/// Reads and validates the spec named by the manifest, applying overrides.
pub fn load_problem(manifest: &RunManifest) -> RunResult<ValidatedProblem> {
    let path = &manifest.spec_path;
    let text = fs::read_to_string(path).map_err(io_err("read", path))?;
    Ok(parse_spec_with_overrides(&text, path.parent(), &manifest.overrides)?)
}

pub(crate) fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> RunResult<PathBuf> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(io_err("format", path))?;
    fs::write(path, buf).map_err(io_err("write", path))?;
    Ok(path.to_path_buf())
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> RunResult<PathBuf> {
    write_file(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value).map_err(std::io::Error::other)?;
        buf.write_all(b"\n")
    })
}

pub(crate) fn explicit_green(problem: &ValidatedProblem) -> RunResult<Arc<GreenTable>> {
    Ok(Arc::new(build_green(&problem.grid, &problem.params, GreenRoute::Explicit)?))
}

/// The lifted boundary density at the finest schedule level, if the spec
/// carries an `eta` measure.
pub fn eta_density(problem: &ValidatedProblem) -> RunResult<Option<(f64, GridField)>> {
    let Some(eta) = &problem.eta else { return Ok(None) };
    let t = BOUNDARY_SCHEDULE[BOUNDARY_SCHEDULE.len() - 1];
    let lifted = lift_measure(eta, t, &problem.params)?;
    Ok(Some((t, lifted.density(&problem.grid)?)))
}

/// Full solve; with `eta` present the finest lifted density is an extra
/// interior source.
pub fn solve_problem(problem: &ValidatedProblem) -> RunResult<(Solution, Option<(f64, GridField)>)> {
    let green = explicit_green(problem)?;
    let eta = eta_density(problem)?;
    let ctx = SolverContext::with_green(problem, green, eta.as_ref().map(|(_, d)| d))?;
    Ok((ctx.solve_full()?, eta))
}

/// Runs one command and writes its outputs into `out_dir`.
pub fn run(manifest: &RunManifest) -> RunResult<Outcome> {
    let problem = load_problem(manifest)?;
    let out = &manifest.out_dir;
    fs::create_dir_all(out).map_err(io_err("create", out))?;
    match manifest.command {
        Command::Solve => run_solve(&problem, out),
        Command::Verify => verify::run_verify(&problem, manifest.seed, out),
        Command::Sweep => run_sweep(&problem, out),
        Command::Boundary => run_boundary(&problem, manifest.seed, out),
        Command::Stability => run_stability(&problem, out),
    }
}

/// Runs the manifest and reports on stdout/stderr; returns the exit code.
pub fn execute(manifest: &RunManifest) -> i32 {
    match run(manifest) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            exit::OK
        }
        Err(err) => {
            eprintln!("error: {err}");
            if let RunError::Core(fracgreen_core::Error::NoRoot { c_max, .. }) = &err {
                eprintln!("largest admissible c: {c_max:.6e}");
            }
            err.exit_code()
        }
    }
}

fn run_solve(problem: &ValidatedProblem, out: &Path) -> RunResult<Outcome> {
    let (sol, eta) = solve_problem(problem)?;
    let csv = write_file(&out.join("solution.csv"), |b| sol.write_csv(b))?;
    let diag = json!({
        "n": problem.grid.n,
        "alpha": problem.params.alpha,
        "p": problem.g.p,
        "p_star": problem.p_star,
        "eta_level": eta.as_ref().map(|(t, _)| *t),
        "solver": sol.diagnostics(),
    });
    let json = write_json(&out.join("diagnostics.json"), &diag)?;
    let summary = format!(
        "solve: converged in {} iterations at level {} (lambda* = {:.6e}, last residual {:.3e})",
        sol.iterations,
        sol.level,
        sol.lambda_star,
        sol.residual_history.last().copied().unwrap_or(0.0)
    );
    Ok(Outcome { files: vec![csv, json], summary })
}

fn run_sweep(problem: &ValidatedProblem, out: &Path) -> RunResult<Outcome> {
    let table = critical_sweep(&SweepConfig { alpha: problem.params.alpha, ..SweepConfig::default() })?;
    let csv = write_file(&out.join("sweep.csv"), |b| table.write_csv(b))?;
    let json = write_json(&out.join("sweep.json"), &table)?;
    let verdicts: Vec<String> = table
        .verdicts
        .iter()
        .map(|v| format!("{}p*: {:?}/{:?}", v.q_factor, v.unweighted, v.weighted))
        .collect();
    Ok(Outcome { files: vec![csv, json], summary: format!("sweep: {}", verdicts.join(", ")) })
}

fn run_boundary(problem: &ValidatedProblem, seed: u64, out: &Path) -> RunResult<Outcome> {
    let eta = problem
        .eta
        .clone()
        .ok_or_else(|| fracgreen_core::Error::Precondition("the boundary run needs an `eta` measure".into()))?;
    let base = problem.modified(|s| s.eta = None)?;
    let green = explicit_green(&base)?;
    let report = solve_concentrated(&eta, &base, green, &BOUNDARY_SCHEDULE, &TestBattery::new(seed))?;
    let alpha = problem.params.alpha;
    let normal = fractional_normal_test(&|y: f64| (1.0 - y * y).max(0.0).powf(alpha), 1.0, &problem.params)?;
    let csv = write_file(&out.join("boundary.csv"), |b| report.write_csv(b))?;
    let summary = json!({
        "schedule": BOUNDARY_SCHEDULE,
        "q": report.q,
        "rows": report.rows,
        "cauchy_decreasing": report.cauchy_decreasing(),
        "w11_bounded": report.w11_bounded(),
        "pairings": report.pairings,
        "pairing_limits": report.pairing_limits,
        "normal_derivative_check": {
            "value": normal.value,
            "exact": 2f64.powf(alpha),
            "converged": normal.converged,
        },
    });
    let json = write_json(&out.join("boundary.json"), &summary)?;
    let text = format!(
        "boundary: Cauchy differences decreasing = {}, W^{{1,1}} bounded = {}",
        report.cauchy_decreasing(),
        report.w11_bounded()
    );
    Ok(Outcome { files: vec![csv, json], summary: text })
}

fn run_stability(problem: &ValidatedProblem, out: &Path) -> RunResult<Outcome> {
    let report = stability_experiment(problem, explicit_green(problem)?, &StabilityConfig::default())?;
    let csv = write_file(&out.join("stability.csv"), |b| report.write_csv(b))?;
    let json = write_json(&out.join("stability.json"), &report)?;
    let summary = format!(
        "stability: final distance {:.3e} (threshold {:.1e}), eventually decreasing = {}",
        report.final_distance, report.threshold, report.eventually_decreasing
    );
    Ok(Outcome { files: vec![csv, json], summary })
}
