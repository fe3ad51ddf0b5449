//! Boundary-concentrated measures: lifting `η` on `∂Ω` to the level sets
//! `{ρ = t}`, the fractional normal derivative `lim t^{-α} ξ(x + t n_x)`, and
//! the solves driven by `t^{-α} η_t`.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::GreenTable;
use crate::harness::{w1q_norm, TestBattery};
use crate::model::{Atom, FracParams, Grid, GridField, RadonMeasure, Support, ValidatedProblem};
use crate::solver::{Solution, SolverContext};

/// Largest admissible level parameter.
pub const T0: f64 = 0.25;

/// Levels `t₀ 2^{-j}`, `j = 0..=8`, used for the normal-derivative limit.
pub const NORMAL_LEVELS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMeasure {
    pub t: f64,
    /// `η_t`, carried by `{ρ = t}`.
    pub measure: RadonMeasure,
    /// `t^{-α}`.
    pub scale: f64,
}

impl LiftedMeasure {
    pub fn scaled_mass(&self) -> f64 {
        self.scale * self.measure.atom_mass()
    }

    /// `t^{-α} η_t` smoothed with `(1 - s²)³` of radius `t/2`, so that the
    /// support stays in `(∂Ω)_{2t}`. Nodal masses are renormalized.
    pub fn density(&self, grid: &Arc<Grid>) -> Result<GridField> {
        let r = 0.5 * self.t;
        let mut out = vec![0.0; grid.n];
        for a in &self.measure.atoms {
            let w: Vec<f64> = grid
                .nodes
                .iter()
                .map(|&x| {
                    let s = (x - a.point) / r;
                    (1.0 - s * s).max(0.0).powi(3)
                })
                .collect();
            let total = w.iter().sum::<f64>() * grid.h;
            if total > 0.0 {
                out.iter_mut().zip(&w).for_each(|(o, wi)| *o += self.scale * a.mass * wi / total);
            } else {
                out[grid.nearest(a.point)] += self.scale * a.mass / grid.h;
            }
        }
        GridField::new(grid.clone(), out)
    }
}

/// `η_t(E_t) = η(E)`: on the interval each atom at `±1` moves radially to
/// `±(1 - t)`.
pub fn lift_measure(eta: &RadonMeasure, t: f64, params: &FracParams) -> Result<LiftedMeasure> {
    if !(t > 0.0 && t < T0) {
        return Err(Error::LevelOutOfRange { t, t0: T0 });
    }
    if eta.support != Support::Boundary {
        return Err(Error::WrongSupport("interior/exterior", "only boundary measures are lifted"));
    }
    let atoms = eta
        .atoms
        .iter()
        .map(|a| {
            if a.point.abs() != 1.0 {
                return Err(Error::BoundarySupport { point: a.point });
            }
            Ok(Atom { point: (1.0 - t) * a.point, mass: a.mass })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LiftedMeasure { t, measure: RadonMeasure::interior(atoms), scale: t.powf(-params.alpha) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalLimit {
    pub value: f64,
    pub converged: bool,
    /// `t^{-α} ξ(x + t n_x)` at each level.
    pub sequence: Vec<f64>,
}

/// `lim_{t→0⁺} t^{-α} ξ(x + t n_x)` for `x ∈ ∂Ω`, inward normal `-x`, by
/// Richardson extrapolation with the order read off consecutive differences.
pub fn fractional_normal_test(xi: &impl Fn(f64) -> f64, x: f64, params: &FracParams) -> Result<NormalLimit> {
    if x.abs() != 1.0 {
        return Err(Error::BoundarySupport { point: x });
    }
    let sequence: Vec<f64> = (0..NORMAL_LEVELS)
        .map(|j| {
            let t = T0 * 0.5f64.powi(j as i32);
            t.powf(-params.alpha) * xi(x - t * x)
        })
        .collect();
    let d: Vec<f64> = sequence.windows(2).map(|w| w[1] - w[0]).collect();
    let last = *sequence.last().expect("nonempty");
    let scale = sequence.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if d.iter().all(|v| v.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE)) {
        return Ok(NormalLimit { value: last, converged: true, sequence });
    }
    let k = d.len();
    let ratio = d[k - 2] / d[k - 1];
    // Cauchy: the differences must shrink geometrically at the tail
    let converged = ratio.is_finite() && ratio > 1.0 && d[k - 3..].windows(2).all(|w| w[1].abs() < w[0].abs());
    let value = if converged { last + d[k - 1] / (ratio - 1.0) } else { last };
    Ok(NormalLimit { value, converged, sequence })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub t: f64,
    pub l1_norm: f64,
    /// `‖u_k - u_{k-1}‖_{L¹}` (NaN at the first level).
    pub cauchy_diff: f64,
    pub w11: f64,
    /// `W^{1,q}` with `q = (1 + p*)/2`.
    pub w1q: f64,
    /// `t^{-α} η_t` mass.
    pub scaled_mass: f64,
    /// `∫ ρ^α · (smoothed t^{-α} η_t)`.
    pub weighted_mass: f64,
}

#[derive(Debug, Clone)]
pub struct ConcentratedReport {
    pub q: f64,
    pub rows: Vec<LevelRow>,
    pub solutions: Vec<Solution>,
    /// Per `C_α` battery function: pairings against the scaled density at
    /// each level, and the limit from [`fractional_normal_test`].
    pub pairings: Vec<Vec<f64>>,
    pub pairing_limits: Vec<f64>,
}

impl ConcentratedReport {
    pub fn cauchy_decreasing(&self) -> bool {
        self.rows.windows(2).skip(1).all(|w| w[1].cauchy_diff < w[0].cauchy_diff)
    }

    /// Successive `W^{1,1}` ratios stay within the stable band.
    pub fn w11_bounded(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].w11 <= 1.05 * w[0].w11)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "t,l1_norm,cauchy_diff,w11,w1q,scaled_mass,weighted_mass")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                r.t, r.l1_norm, r.cauchy_diff, r.w11, r.w1q, r.scaled_mass, r.weighted_mass
            )?;
        }
        Ok(())
    }
}

/// Solve with the extra source `t_k^{-α} η_{t_k}` for each level of the
/// schedule and report Cauchy differences and Sobolev norms.
pub fn solve_concentrated(
    eta: &RadonMeasure,
    problem: &ValidatedProblem,
    green: Arc<GreenTable>,
    schedule: &[f64],
    battery: &TestBattery,
) -> Result<ConcentratedReport> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] >= w[0]) || schedule.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::BadSchedule);
    }
    let grid = &problem.grid;
    let params = &problem.params;
    let q = 0.5 * (1.0 + problem.p_star);
    let alpha = params.alpha;
    let pairing_limits = battery
        .calpha
        .iter()
        .map(|f| eta.atoms.iter().map(|a| a.mass * f.normal_limit(alpha, a.point)).sum())
        .collect();

    let mut rows: Vec<LevelRow> = Vec::new();
    let mut solutions: Vec<Solution> = Vec::new();
    let mut pairings = vec![Vec::new(); battery.calpha.len()];
    let mut increases = 0;
    for (k, &t) in schedule.iter().enumerate() {
        let lifted = lift_measure(eta, t, params)?;
        let density = lifted.density(grid)?;
        for (f, out) in battery.calpha.iter().zip(pairings.iter_mut()) {
            out.push(grid.nodes.iter().zip(&density.values).map(|(&x, d)| f.eval(alpha, x) * d).sum::<f64>() * grid.h);
        }
        let weighted_mass = grid.dist.iter().zip(&density.values).map(|(r, d)| r.powf(alpha) * d).sum::<f64>() * grid.h;
        let sol = SolverContext::with_green(problem, green.clone(), Some(&density))?.solve_full()?;
        let cauchy_diff = solutions.last().map_or(f64::NAN, |prev| sol.u.zip_with(&prev.u, |a, b| a - b).l1_norm());
        if let Some(prev) = rows.last() {
            if cauchy_diff > prev.cauchy_diff {
                increases += 1;
                if increases >= 2 {
                    return Err(Error::DivergingSequence(k));
                }
            } else {
                increases = 0;
            }
        }
        rows.push(LevelRow {
            t,
            l1_norm: sol.u.l1_norm(),
            cauchy_diff,
            w11: w1q_norm(&sol.u, 1.0)?,
            w1q: w1q_norm(&sol.u, q)?,
            scaled_mass: lifted.scaled_mass(),
            weighted_mass,
        });
        solutions.push(sol);
    }
    Ok(ConcentratedReport { q, rows, solutions, pairings, pairing_limits })
}
