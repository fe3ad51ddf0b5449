//! Python bindings: constants, kernels, the discrete operator, full solves,
//! verification gates and the critical-exponent sweep.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fracgreen_cli::{core_exit_code, exit, RunError, RunManifest};
use fracgreen_core::harness::{SweepConfig, Verdict};
use fracgreen_core::{green, FracParams, Grid, GridField, Source};

fn core_err(e: fracgreen_core::Error) -> PyErr {
    if core_exit_code(&e) == exit::SPEC {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn run_err(e: RunError) -> PyErr {
    match e {
        RunError::Core(c) => core_err(c),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn params(alpha: f64) -> PyResult<FracParams> {
    FracParams::new(1, alpha).map_err(core_err)
}

fn overrides(map: Option<Vec<(String, String)>>) -> Vec<(String, String)> {
    map.unwrap_or_default()
}

/// `C_{N,α}`, the normalization constant of `(-Δ)^α`.
#[pyfunction]
fn normalization_constant(dim: usize, alpha: f64) -> PyResult<f64> {
    fracgreen_core::normalization_constant(dim, alpha).map_err(core_err)
}

/// `p* = N / (N - (2α - 1))`.
#[pyfunction]
fn critical_exponent(dim: usize, alpha: f64) -> f64 {
    fracgreen_core::critical_exponent(dim, alpha)
}

/// `𝔾_α[1](x)` on the interval.
#[pyfunction]
fn torsion_profile(alpha: f64, x: f64) -> PyResult<f64> {
    Ok(green::torsion_profile(&params(alpha)?, x))
}

/// Green kernel `G_α(x, y)` of the interval.
#[pyfunction]
fn green_kernel(x: f64, y: f64, alpha: f64) -> PyResult<f64> {
    green::green_kernel_ball(x, y, &params(alpha)?).map_err(core_err)
}

/// Nodes of the uniform grid with `n` interior points.
#[pyfunction]
fn grid_nodes(n: usize) -> PyResult<Vec<f64>> {
    Ok(Grid::interval(n).map_err(core_err)?.nodes.clone())
}

/// Discrete `(-Δ)^α` applied to nodal values (zero outside the interval).
#[pyfunction]
fn apply_operator(py: Python<'_>, values: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    let p = params(alpha)?;
    py.allow_threads(|| {
        let grid = Grid::interval(values.len())?;
        let op = fracgreen_core::assemble_operator(&grid, &p)?;
        Ok(fracgreen_core::apply_operator(&op, &GridField::new(grid, values)?)?.values)
    })
    .map_err(core_err)
}

/// `𝔾_α[f]` for nodal source values.
#[pyfunction]
fn green_apply(py: Python<'_>, values: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    let p = params(alpha)?;
    py.allow_threads(|| {
        let grid = Grid::interval(values.len())?;
        let table = fracgreen_core::build_green(&grid, &p, fracgreen_core::GreenRoute::Explicit)?;
        Ok(fracgreen_core::green_apply(&table, Source::Field(&GridField::new(grid, values)?))?.values)
    })
    .map_err(core_err)
}

/// A converged solution `u = g_part + p_part (+ eta_part)` on the grid.
#[pyclass(frozen, get_all, module = "fracgreen")]
struct Solution {
    x: Vec<f64>,
    u: Vec<f64>,
    g_part: Vec<f64>,
    p_part: Vec<f64>,
    eta_part: Option<Vec<f64>>,
    iterations: usize,
    level: usize,
    lambda_star: f64,
    residual_history: Vec<f64>,
    /// Solver diagnostics as a JSON document.
    diagnostics: String,
    csv: String,
}

#[pymethods]
impl Solution {
    fn __len__(&self) -> usize {
        self.u.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(n={}, iterations={}, level={}, lambda_star={:.6e})",
            self.u.len(),
            self.iterations,
            self.level,
            self.lambda_star
        )
    }
}

fn load(spec: &str, base_dir: Option<PathBuf>, set: Option<Vec<(String, String)>>) -> PyResult<fracgreen_core::ValidatedProblem> {
    fracgreen_core::parse_spec_with_overrides(spec, base_dir.as_deref(), &overrides(set)).map_err(core_err)
}

/// Solve the problem given as JSON spec text; `overrides` are
/// `(key, value)` pairs as for `--set`.
#[pyfunction]
#[pyo3(signature = (spec, overrides=None, base_dir=None))]
fn solve(py: Python<'_>, spec: &str, overrides: Option<Vec<(String, String)>>, base_dir: Option<PathBuf>) -> PyResult<Solution> {
    let problem = load(spec, base_dir, overrides)?;
    let (sol, _) = py.allow_threads(|| fracgreen_cli::solve_problem(&problem)).map_err(run_err)?;
    let mut csv = Vec::new();
    sol.write_csv(&mut csv).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let diagnostics = serde_json::to_string(&sol.diagnostics()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(Solution {
        x: sol.u.grid.nodes.clone(),
        u: sol.u.values.clone(),
        g_part: sol.g_part.values.clone(),
        p_part: sol.p_part.values.clone(),
        eta_part: sol.eta_part.as_ref().map(|e| e.values.clone()),
        iterations: sol.iterations,
        level: sol.level,
        lambda_star: sol.lambda_star,
        residual_history: sol.residual_history.clone(),
        diagnostics,
        csv: String::from_utf8_lossy(&csv).into_owned(),
    })
}

/// Solve and evaluate the verification gates: `[(name, value, threshold, passed)]`.
#[pyfunction]
#[pyo3(signature = (spec, seed=0, overrides=None, base_dir=None))]
fn verify(
    py: Python<'_>,
    spec: &str,
    seed: u64,
    overrides: Option<Vec<(String, String)>>,
    base_dir: Option<PathBuf>,
) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let problem = load(spec, base_dir, overrides)?;
    let gates = py
        .allow_threads(|| {
            let (sol, eta) = fracgreen_cli::solve_problem(&problem)?;
            fracgreen_cli::verify::gates(&problem, &sol, eta.as_ref().map(|(_, d)| d), seed)
        })
        .map_err(run_err)?;
    Ok(gates.into_iter().map(|g| (g.name.to_string(), g.value, g.threshold, g.passed)).collect())
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Growing => "growing",
        Verdict::Indeterminate => "indeterminate",
    }
}

/// Refinement sweep of `‖∇𝔾_α[δ₀]‖_{L^q}` for `q = factor · p*`.
///
/// Returns `(rows, verdicts)`: rows are
/// `(q_factor, q, n, norm, weighted, ratio, weighted_ratio)`, verdicts are
/// `(q_factor, unweighted, weighted)`.
#[pyfunction]
#[pyo3(signature = (alpha=0.75, q_factors=None, ns=None))]
#[allow(clippy::type_complexity)]
fn critical_sweep(
    py: Python<'_>,
    alpha: f64,
    q_factors: Option<Vec<f64>>,
    ns: Option<Vec<usize>>,
) -> PyResult<(Vec<(f64, f64, usize, f64, f64, f64, f64)>, Vec<(f64, &'static str, &'static str)>)> {
    let d = SweepConfig::default();
    let cfg = SweepConfig { alpha, q_factors: q_factors.unwrap_or(d.q_factors), ns: ns.unwrap_or(d.ns) };
    let table = py.allow_threads(|| fracgreen_core::harness::critical_sweep(&cfg)).map_err(core_err)?;
    let rows = table.rows.iter().map(|r| (r.q_factor, r.q, r.n, r.norm, r.weighted, r.ratio, r.weighted_ratio)).collect();
    let verdicts = table.verdicts.iter().map(|v| (v.q_factor, verdict_name(v.unweighted), verdict_name(v.weighted))).collect();
    Ok((rows, verdicts))
}

/// Run a CLI command and return its exit code.
#[pyfunction]
#[pyo3(signature = (command, spec, out, seed=0, overrides=None))]
fn run(py: Python<'_>, command: &str, spec: PathBuf, out: PathBuf, seed: u64, overrides: Option<Vec<(String, String)>>) -> PyResult<i32> {
    use fracgreen_cli::Command::*;
    let cmd = match command.to_ascii_lowercase().as_str() {
        "solve" => Solve,
        "verify" => Verify,
        "sweep" => Sweep,
        "boundary" => Boundary,
        "stability" => Stability,
        other => return Err(PyValueError::new_err(format!("unknown command `{other}`"))),
    };
    let manifest = RunManifest { command: cmd, spec_path: spec, out_dir: out, seed, overrides: overrides.unwrap_or_default() };
    Ok(py.allow_threads(|| fracgreen_cli::execute(&manifest)))
}

#[pymodule]
fn fracgreen(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(normalization_constant, m)?)?;
    m.add_function(wrap_pyfunction!(critical_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(torsion_profile, m)?)?;
    m.add_function(wrap_pyfunction!(green_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(grid_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(apply_operator, m)?)?;
    m.add_function(wrap_pyfunction!(green_apply, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(critical_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
