//! `verify`: re-solve the spec and check residual and invariant gates.

use std::fs;
use std::path::Path;

use serde::Serialize;

use fracgreen_core::green::{torsion_profile, POISSON_ROUTE_TOL};
use fracgreen_core::harness::{weak_residual_with_source, TestBattery};
use fracgreen_core::solver::BALL_SLACK;
use fracgreen_core::{Solution, ValidatedProblem};

use crate::{solve_problem, write_file, write_json, Outcome, RunError, RunResult};

pub const RESIDUAL_GATE: f64 = 5e-3;
pub const DECOMPOSITION_GATE: f64 = 1e-12;
pub const TORSION_GATE: f64 = 2e-2;
pub const ROUND_TRIP_GATE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Gate {
    fn new(name: &'static str, value: f64, threshold: f64) -> Self {
        Self { name, value, threshold, passed: value <= threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub eta_level: Option<f64>,
    pub gates: Vec<Gate>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "gate,value,threshold,passed")?;
        for g in &self.gates {
            writeln!(out, "{},{:.6e},{:.6e},{}", g.name, g.value, g.threshold, g.passed)?;
        }
        Ok(())
    }

    pub fn failed(&self) -> Vec<String> {
        self.gates.iter().filter(|g| !g.passed).map(|g| g.name.to_string()).collect()
    }
}

/// Linear problem with a constant source and no measure data, whose exact
/// solution is a multiple of the torsion profile.
fn torsion_scale(problem: &ValidatedProblem) -> Option<f64> {
    let g = &problem.g;
    let f0 = *g.f.first()?;
    let quiet = g.c == 0.0
        && (problem.sigma == 0.0 || problem.nu.is_zero())
        && (problem.rho == 0.0 || problem.mu.is_zero())
        && problem.eta.is_none();
    (quiet && g.f.iter().all(|&v| v == f0) && g.eps * f0 > 0.0).then_some(g.eps * f0)
}

fn parse_csv(text: &str) -> Option<(String, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines.next()?.to_string();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().ok()).collect::<Option<Vec<f64>>>()).collect::<Option<_>>()?;
    Some((header, rows))
}

/// Largest column-relative difference between two solution CSVs, or
/// infinity if their shapes differ.
fn csv_distance(saved: &str, fresh: &str) -> f64 {
    let (Some((h1, a)), Some((h2, b))) = (parse_csv(saved), parse_csv(fresh)) else { return f64::INFINITY };
    if h1 != h2 || a.len() != b.len() || a.iter().zip(&b).any(|(r, s)| r.len() != s.len()) {
        return f64::INFINITY;
    }
    let cols = b.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| {
            let scale = b.iter().map(|r| r[j].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            a.iter().zip(&b).map(|(r, s)| (r[j] - s[j]).abs()).fold(0.0, f64::max) / scale
        })
        .fold(0.0, f64::max)
}

pub fn gates(problem: &ValidatedProblem, sol: &Solution, extra: Option<&fracgreen_core::GridField>, seed: u64) -> RunResult<Vec<Gate>> {
    let spec = problem.modified(|s| s.eta = None)?;
    let residual = weak_residual_with_source(&sol.u, &spec, &TestBattery::new(seed), extra)?;
    let sup = sol.u.sup_norm().max(f64::MIN_POSITIVE);
    let decomposition = (0..sol.u.values.len())
        .map(|i| {
            let eta = sol.eta_part.as_ref().map_or(0.0, |e| e.values[i]);
            (sol.u.values[i] - sol.g_part.values[i] - sol.p_part.values[i] - eta).abs()
        })
        .fold(0.0, f64::max)
        / sup;
    let ball = sol.grad_lp_history.iter().copied().fold(0.0, f64::max) / sol.lambda_star;
    let negative = sol.u.values.iter().copied().fold(0.0, f64::min).abs();

    let mut out = vec![
        Gate::new("weak_residual", residual.max, RESIDUAL_GATE),
        Gate::new("picard_converged", sol.residual_history.last().copied().unwrap_or(0.0), problem.solver.tol),
        Gate::new("exact_decomposition", decomposition, DECOMPOSITION_GATE),
        Gate::new("gradient_ball", ball, BALL_SLACK),
        Gate::new("nonnegativity", negative, problem.solver.tol),
    ];
    if problem.rho > 0.0 && !problem.mu.is_zero() {
        out.push(Gate::new("poisson_routes", sol.poisson_route_discrepancy, POISSON_ROUTE_TOL));
    }
    if let Some(scale) = torsion_scale(problem) {
        let err = problem
            .grid
            .nodes
            .iter()
            .zip(&sol.u.values)
            .map(|(&x, &u)| (u - scale * torsion_profile(&problem.params, x)).abs())
            .fold(0.0, f64::max);
        out.push(Gate::new("torsion_oracle", err / sup, TORSION_GATE));
    }
    Ok(out)
}

pub(crate) fn run_verify(problem: &ValidatedProblem, seed: u64, out: &Path) -> RunResult<Outcome> {
    let (sol, eta) = solve_problem(problem)?;
    let mut gates = gates(problem, &sol, eta.as_ref().map(|(_, d)| d), seed)?;
    let saved = out.join("solution.csv");
    if saved.exists() {
        let text = fs::read_to_string(&saved).map_err(|source| RunError::Io { action: "read", path: saved.clone(), source })?;
        let mut fresh = Vec::new();
        sol.write_csv(&mut fresh).map_err(|source| RunError::Io { action: "format", path: saved.clone(), source })?;
        gates.push(Gate::new("round_trip", csv_distance(&text, &String::from_utf8_lossy(&fresh)), ROUND_TRIP_GATE));
    }
    let passed = gates.iter().all(|g| g.passed);
    let report = VerifyReport { seed, eta_level: eta.map(|(t, _)| t), gates, passed };
    let csv = write_file(&out.join("verify.csv"), |b| report.write_csv(b))?;
    let json = write_json(&out.join("verify.json"), &report)?;
    if !passed {
        return Err(RunError::Verification { failed: report.failed() });
    }
    let summary = format!("verify: all {} gates passed", report.gates.len());
    Ok(Outcome { files: vec![csv, json], summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_csvs_are_at_distance_zero() {
        let a = "x,u\n-5.0e-1,1.0e0\n5.0e-1,2.0e0\n";
        assert_eq!(csv_distance(a, a), 0.0);
        assert!((csv_distance("x,u\n-5.0e-1,1.0e0\n5.0e-1,2.2e0\n", a) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mismatched_csvs_are_infinitely_far() {
        let a = "x,u\n0.0,1.0\n";
        assert_eq!(csv_distance(a, "x,v\n0.0,1.0\n"), f64::INFINITY);
        assert_eq!(csv_distance(a, "x,u\n0.0,1.0\n1.0,1.0\n"), f64::INFINITY);
        assert_eq!(csv_distance("x,u\n0.0,oops\n", a), f64::INFINITY);
    }

    #[test]
    fn gates_compare_inclusively_and_reject_nan() {
        assert!(Gate::new("g", 1.0, 1.0).passed);
        assert!(!Gate::new("g", f64::NAN, 1.0).passed);
    }
}
