//! Norms, the weak-formulation residual and the experiment drivers.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::fractional_normal_test;
use crate::error::{Error, Result};
use crate::green::{green_kernel_ball, nonlocal_normal_derivative_fn, GreenTable};
use crate::model::{Atom, FracParams, Grid, GridField, ProblemSpec, RadonMeasure, ValidatedProblem};
use crate::quad;
use crate::solver::{mollify_measure, SolverContext};

/// `(Σ |u|^q h + Σ |∇u|^q h)^{1/q}`.
pub fn w1q_norm(u: &GridField, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter { name: "q", reason: format!("W^(1,q) needs q >= 1, got {q}") });
    }
    Ok(w1q_quasi_norm(u, q))
}

/// As [`w1q_norm`] without the `q ≥ 1` restriction.
pub fn w1q_quasi_norm(u: &GridField, q: f64) -> f64 {
    let h = u.grid.h;
    let vals: f64 = u.values.iter().map(|v| v.abs().powf(q)).sum();
    let grads: f64 = u.gradient().iter().map(|v| v.abs().powf(q)).sum();
    ((vals + grads) * h).powf(1.0 / q)
}

/// `‖ |∇u| d^{1-α} ‖_{L^q}`.
pub fn weighted_grad_norm(u: &GridField, q: f64, alpha: f64) -> f64 {
    let g = u.gradient();
    let s: f64 = g.iter().zip(&u.grid.dist).map(|(g, d)| (g.abs() * d.powf(1.0 - alpha)).powf(q)).sum();
    (s * u.grid.h).powf(1.0 / q)
}

/// `φ(x) = (1 - ((x - center) / width)²)_+^4`, a `C³` bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        let r = (x - self.center) / self.width;
        let q = 1.0 - r * r;
        if q > 0.0 {
            q.powi(4)
        } else {
            0.0
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }

    /// Second and fourth derivatives (zero outside the support).
    fn derivatives(&self, x: f64) -> (f64, f64) {
        let w = self.width;
        let r = (x - self.center) / w;
        let q = 1.0 - r * r;
        if q <= 0.0 {
            return (0.0, 0.0);
        }
        let d2 = (-8.0 * q.powi(3) + 48.0 * r * r * q * q) / (w * w);
        let d4 = (144.0 * q * q - 1152.0 * r * r * q + 384.0 * r.powi(4)) / w.powi(4);
        (d2, d4)
    }

    /// `(-Δ)^α φ(x)` by quadrature of the symmetric-difference integral,
    /// with a Taylor expansion on `z < z0`.
    pub fn frac_laplacian(&self, params: &FracParams, x: f64) -> f64 {
        let s = 2.0 * params.alpha;
        let phi_x = self.eval(x);
        let (lo, hi) = self.support();
        let edge = (x - lo).abs().min((x - hi).abs());
        let z0 = 1e-4 * self.width;
        let (d2, d4) = self.derivatives(x);
        let near = if edge > 2.0 * z0 {
            -d2 * z0.powf(2.0 - s) / (2.0 - s) - d4 * z0.powf(4.0 - s) / (12.0 * (4.0 - s))
        } else {
            -d2 * z0.powf(2.0 - s) / (2.0 - s)
        };
        let reach = (x - lo).abs().max((x - hi).abs()) + z0;
        let f = |z: f64| (2.0 * phi_x - self.eval(x + z) - self.eval(x - z)) * z.powf(-1.0 - s);
        let breaks = [(x - lo).abs(), (x - hi).abs()];
        let mid = quad::integrate_pieces(&f, z0, reach, &breaks, 1e-10);
        let far = 2.0 * phi_x * reach.powf(-s) / s;
        params.c_norm * (near + mid + far)
    }
}

/// `ξ(x) = (1 - x²)_+^α (a + b x)`, so that `ρ^{-α} ξ` is continuous on `Ω̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CAlphaFn {
    pub a: f64,
    pub b: f64,
}

impl CAlphaFn {
    pub fn eval(&self, alpha: f64, x: f64) -> f64 {
        (1.0 - x * x).max(0.0).powf(alpha) * (self.a + self.b * x)
    }

    /// `lim t^{-α} ξ(x - t x)` at `x = ±1`.
    pub fn normal_limit(&self, alpha: f64, x: f64) -> f64 {
        2f64.powf(alpha) * (self.a + self.b * x)
    }
}

/// Seeded test functions: bumps vanishing within `0.05` of `∂Ω` and
/// `C_α` functions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestBattery {
    pub seed: u64,
    pub bumps: Vec<Bump>,
    pub calpha: Vec<CAlphaFn>,
}

pub const BATTERY_SIZE: usize = 8;
pub const BUMP_MARGIN: f64 = 0.05;

impl TestBattery {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bumps = (0..BATTERY_SIZE)
            .map(|_| {
                let width = rng.random_range(0.15..0.5);
                let room = 1.0 - BUMP_MARGIN - width;
                Bump { center: rng.random_range(-room..room), width }
            })
            .collect();
        let calpha = (0..4).map(|_| CAlphaFn { a: rng.random_range(0.5..1.5), b: rng.random_range(-0.5..0.5) }).collect();
        Self { seed, bumps, calpha }
    }

    /// `(-Δ)^α φ` of every bump at the grid nodes.
    pub fn laplacians(&self, grid: &Grid, params: &FracParams) -> Vec<Vec<f64>> {
        self.bumps
            .iter()
            .map(|b| grid.nodes.par_iter().map(|&x| b.frac_laplacian(params, x)).collect())
            .collect()
    }
}

/// The pairings of the weak formulation for one test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakTerms {
    pub operator: f64,
    pub nonlinear: f64,
    pub interior: f64,
    pub exterior: f64,
    pub boundary: f64,
    pub extra: f64,
    /// `∫|u| |(-Δ)^α φ|`, the size of the operator pairing's integrand.
    pub operator_scale: f64,
}

impl WeakTerms {
    pub fn residual(&self) -> f64 {
        self.operator - self.nonlinear - self.interior + self.exterior - self.boundary - self.extra
    }

    pub fn normalized(&self) -> f64 {
        let scale = self.operator_scale.max(self.operator.abs())
            + self.nonlinear.abs()
            + self.interior.abs()
            + self.exterior.abs()
            + self.boundary.abs()
            + self.extra.abs();
        if scale > 0.0 {
            self.residual().abs() / scale
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max: f64,
    pub per_bump: Vec<WeakTerms>,
}

/// Residual of
/// `∫u(-Δ)^αφ - ∫g(x,|∇u|)φ - σ∫φdν + ρ∫𝒩_αφ dμ - ∫∂^αφ/∂n^α dη`,
/// maximized over the battery and normalized by the sum of the absolute
/// pairings, the operator pairing counted by its absolute integrand.
pub fn weak_residual(u: &GridField, problem: &ProblemSpec, battery: &TestBattery) -> Result<ResidualReport> {
    weak_residual_with_source(u, problem, battery, None)
}

/// As [`weak_residual`], with an extra interior density on the right-hand side.
pub fn weak_residual_with_source(
    u: &GridField,
    problem: &ProblemSpec,
    battery: &TestBattery,
    extra: Option<&GridField>,
) -> Result<ResidualReport> {
    let grid = &problem.grid;
    u.check_grid(grid)?;
    let params = &problem.params;
    let h = grid.h;
    let grad = u.gradient();
    let source: Vec<f64> = (0..grid.n).map(|i| problem.g.eval(i, grad[i].abs())).collect();
    let laps = battery.laplacians(grid, params);
    let mut per_bump = Vec::with_capacity(battery.bumps.len());
    for (bump, lap) in battery.bumps.iter().zip(&laps) {
        let phi = grid.sample(|x| bump.eval(x));
        let operator = u.values.iter().zip(lap).map(|(a, b)| a * b).sum::<f64>() * h;
        let operator_scale = u.values.iter().zip(lap).map(|(a, b)| (a * b).abs()).sum::<f64>() * h;
        let nonlinear = source.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() * h;
        let interior = problem.sigma * problem.nu.pair(grid, |x| bump.eval(x));
        let mut exterior = 0.0;
        for a in &problem.mu.atoms {
            exterior += a.mass * nonlocal_normal_derivative_fn(&|y| bump.eval(y), bump.support(), a.point, params)?;
        }
        exterior *= problem.rho;
        let mut boundary = 0.0;
        if let Some(eta) = &problem.eta {
            for a in &eta.atoms {
                boundary += a.mass * fractional_normal_test(&|y| bump.eval(y), a.point, params)?.value;
            }
        }
        let extra = extra.map_or(0.0, |e| e.values.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() * h);
        per_bump.push(WeakTerms { operator, nonlinear, interior, exterior, boundary, extra, operator_scale });
    }
    let max = per_bump.iter().map(WeakTerms::normalized).fold(0.0, f64::max);
    Ok(ResidualReport { max, per_bump })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonConfig {
    /// Weight of the positive bump added to `ν`.
    pub bump_weight: f64,
    pub bump: Bump,
    pub tol: f64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self { bump_weight: 0.2, bump: Bump { center: 0.3, width: 0.3 }, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `min (u₂ - u₁)` for `ν` versus `ν + w·bump`.
    pub source_gap: f64,
    /// `min (u_{σ=1} - u_{σ=0})`.
    pub sigma_gap: f64,
    /// `max |u_a - u_b|` for two different initial iterates.
    pub uniqueness_diff: f64,
    /// Node and value of the worst ordering violation, if any.
    pub counterexample: Option<(usize, f64, f64)>,
    pub ordered: bool,
    pub unique: bool,
}

fn min_gap(upper: &GridField, lower: &GridField) -> (usize, f64) {
    upper
        .values
        .iter()
        .zip(&lower.values)
        .map(|(a, b)| a - b)
        .enumerate()
        .fold((0, f64::INFINITY), |m, (i, d)| if d < m.1 { (i, d) } else { m })
}

/// Ordering of solutions for ordered sources and agreement of two Picard
/// runs started from different iterates.
pub fn comparison_experiment(problem: &ValidatedProblem, green: Arc<GreenTable>, cfg: &ComparisonConfig) -> Result<ComparisonReport> {
    let p = problem.g.p;
    if !(p >= 1.0 && p < problem.p_star) {
        return Err(Error::Precondition(format!("comparison needs 1 <= p < p* = {}, got p = {p}", problem.p_star)));
    }
    let grid = &problem.grid;
    let base = SolverContext::with_green(problem, green.clone(), None)?;
    let u1 = base.solve_full()?;

    let bump = grid.sample(|x| cfg.bump_weight * cfg.bump.eval(x));
    let bigger = problem.modified(|s| {
        let d = s.nu.density.get_or_insert_with(|| vec![0.0; grid.n]);
        d.iter_mut().zip(&bump).for_each(|(a, b)| *a += b);
    })?;
    let u2 = SolverContext::with_green(&bigger, green.clone(), None)?.solve_full()?;
    let (node, source_gap) = min_gap(&u2.u, &u1.u);

    let off = problem.modified(|s| s.sigma = 0.0)?;
    let on = problem.modified(|s| s.sigma = 1.0)?;
    let u_off = SolverContext::with_green(&off, green.clone(), None)?.solve_full()?;
    let u_on = SolverContext::with_green(&on, green.clone(), None)?.solve_full()?;
    let (_, sigma_gap) = min_gap(&u_on.u, &u_off.u);

    // second start: zero, at the finest level
    let level = *crate::solver::LEVELS.last().expect("nonempty schedule");
    let a = base.picard(level, None)?;
    let b = base.picard(level, Some(&GridField::zeros(grid.clone())))?;
    let uniqueness_diff = a.u.zip_with(&b.u, |x, y| x - y).sup_norm();

    let ordered = source_gap >= -cfg.tol && sigma_gap >= -cfg.tol;
    let counterexample = (source_gap < -cfg.tol).then(|| (node, grid.nodes[node], source_gap));
    Ok(ComparisonReport { source_gap, sigma_gap, uniqueness_diff, counterexample, ordered, unique: uniqueness_diff <= cfg.tol })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityConfig {
    pub schedule: Vec<usize>,
    /// Picard level shared by every solve; also the proxy for the
    /// measure-data limit.
    pub level: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { schedule: vec![4, 8, 16, 32], level: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub n: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub eventually_decreasing: bool,
    pub final_distance: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl StabilityReport {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "n,distance")?;
        for r in &self.rows {
            writeln!(out, "{},{:.15e}", r.n, r.distance)?;
        }
        Ok(())
    }
}

/// `ν_n = mollify(ν, n)` and `μ_n = μ` with atoms pushed out by `1/n`;
/// reports `‖u_n - u∞‖_{W^{1,max(p,1)}}` against the unperturbed solve.
pub fn stability_experiment(problem: &ValidatedProblem, green: Arc<GreenTable>, cfg: &StabilityConfig) -> Result<StabilityReport> {
    let p = problem.g.p;
    if !(p >= 1.0 && p < problem.p_star) {
        return Err(Error::Precondition(format!("stability needs 1 <= p < p* = {}, got p = {p}", problem.p_star)));
    }
    if cfg.schedule.is_empty() || cfg.schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadSchedule);
    }
    let grid = problem.grid.clone();
    let q = p.max(1.0);
    let reference = SolverContext::with_green(problem, green.clone(), None)?.picard(cfg.level, None)?;
    let rows = cfg
        .schedule
        .iter()
        .map(|&n| {
            let nu_n = mollify_measure(&problem.nu, n, &grid)?;
            let perturbed = problem.modified(|s| {
                s.nu = RadonMeasure::interior(vec![]).with_density(nu_n.values.clone());
                s.mu.atoms = s
                    .mu
                    .atoms
                    .iter()
                    .map(|a| Atom { point: a.point + a.point.signum() / n as f64, mass: a.mass })
                    .collect();
            })?;
            let sol = SolverContext::with_green(&perturbed, green.clone(), None)?.picard(cfg.level, None)?;
            let distance = w1q_norm(&sol.u.zip_with(&reference.u, |a, b| a - b), q)?;
            Ok(StabilityRow { n, distance })
        })
        .collect::<Result<Vec<_>>>()?;
    let d: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    // eventually decreasing: the second half of the schedule is monotone
    let tail_start = d.len() / 2;
    let eventually_decreasing = d[tail_start.saturating_sub(1)..].windows(2).all(|w| w[1] <= w[0]);
    if !eventually_decreasing {
        log::warn!("non-monotone stability tail {d:?}; possible non-uniqueness");
    }
    let final_distance = *d.last().expect("nonempty schedule");
    let threshold = 5.0 * problem.solver.tol;
    Ok(StabilityReport { rows, eventually_decreasing, final_distance, threshold, passed: eventually_decreasing && final_distance <= threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub alpha: f64,
    pub q_factors: Vec<f64>,
    pub ns: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { alpha: 0.75, q_factors: vec![0.5, 0.8, 0.9, 1.0, 1.1], ns: vec![128, 256, 512] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    Growing,
    Indeterminate,
}

impl Verdict {
    pub fn of(ratio: f64) -> Self {
        if (0.95..=1.05).contains(&ratio) {
            Verdict::Stable
        } else if ratio >= 1.10 {
            Verdict::Growing
        } else {
            Verdict::Indeterminate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub q_factor: f64,
    pub q: f64,
    pub n: usize,
    pub norm: f64,
    pub weighted: f64,
    /// Ratio to the previous refinement (NaN on the coarsest grid).
    pub ratio: f64,
    pub weighted_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepVerdict {
    pub q_factor: f64,
    pub q: f64,
    pub unweighted: Verdict,
    pub weighted: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub alpha: f64,
    pub p_star: f64,
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<SweepVerdict>,
}

impl SweepTable {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "q_factor,q,n,norm,weighted,ratio,weighted_ratio")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.15e},{},{:.15e},{:.15e},{:.15e},{:.15e}",
                r.q_factor, r.q, r.n, r.norm, r.weighted, r.ratio, r.weighted_ratio
            )?;
        }
        Ok(())
    }

    pub fn verdict(&self, q_factor: f64) -> Option<&SweepVerdict> {
        self.verdicts.iter().find(|v| (v.q_factor - q_factor).abs() < 1e-12)
    }
}

/// `W^{1,q}` and weighted gradient norms of `𝔾_α[δ₀]` under refinement;
/// the verdict for each `q` uses the ratio between the two finest grids.
pub fn critical_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    let params = FracParams::new(1, cfg.alpha)?;
    let p_star = params.p_star();
    if cfg.ns.len() < 2 {
        return Err(Error::InvalidParameter { name: "ns", reason: "need at least two refinements".into() });
    }
    let fields = cfg
        .ns
        .par_iter()
        .map(|&n| {
            let grid = Grid::interval(n)?;
            let values = grid.nodes.iter().map(|&x| green_kernel_ball(x, 0.0, &params)).collect::<Result<Vec<_>>>()?;
            GridField::new(grid, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &f in &cfg.q_factors {
        let q = f * p_star;
        let mut prev: Option<(f64, f64)> = None;
        for (u, &n) in fields.iter().zip(&cfg.ns) {
            let norm = w1q_quasi_norm(u, q);
            let weighted = weighted_grad_norm(u, q, cfg.alpha);
            let (ratio, weighted_ratio) = prev.map_or((f64::NAN, f64::NAN), |(a, b)| (norm / a, weighted / b));
            rows.push(SweepRow { q_factor: f, q, n, norm, weighted, ratio, weighted_ratio });
            prev = Some((norm, weighted));
        }
        let last = rows.last().expect("at least one row");
        verdicts.push(SweepVerdict { q_factor: f, q, unweighted: Verdict::of(last.ratio), weighted: Verdict::of(last.weighted_ratio) });
    }
    Ok(SweepTable { alpha: cfg.alpha, p_star, rows, verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraclap::{apply_truncated_with_breaks, assemble_operator, apply_operator};
    use crate::green::torsion_profile;

    #[test]
    fn w1q_of_zero_and_bad_q() {
        let grid = Grid::interval(32).unwrap();
        assert_eq!(w1q_norm(&GridField::zeros(grid.clone()), 1.5).unwrap(), 0.0);
        assert!(w1q_norm(&GridField::zeros(grid), 0.5).is_err());
    }

    #[test]
    fn torsion_w11_stable_under_refinement() {
        let params = FracParams::new(1, 0.75).unwrap();
        let norm = |n| w1q_norm(&GridField::from_fn(Grid::interval(n).unwrap(), |x| torsion_profile(&params, x)), 1.0).unwrap();
        let (a, b) = (norm(256), norm(512));
        assert!(((b - a) / b).abs() < 0.02);
    }

    #[test]
    fn battery_respects_margin_and_seed() {
        let a = TestBattery::new(7);
        assert_eq!(a, TestBattery::new(7));
        assert_ne!(a, TestBattery::new(8));
        assert_eq!(a.bumps.len(), BATTERY_SIZE);
        for b in &a.bumps {
            let (lo, hi) = b.support();
            assert!(lo >= -1.0 + BUMP_MARGIN - 1e-12 && hi <= 1.0 - BUMP_MARGIN + 1e-12);
        }
    }

    #[test]
    fn bump_laplacian_matches_truncated_route() {
        let params = FracParams::new(1, 0.7).unwrap();
        let b = Bump { center: 0.1, width: 0.4 };
        let (lo, hi) = b.support();
        for &x in &[0.1, 0.3, -0.2, 0.6, -0.8] {
            let exact = b.frac_laplacian(&params, x);
            // Richardson in ε over the truncated operator (error ~ ε^{2-2α})
            let t = |e: f64| apply_truncated_with_breaks(&params, &|y| b.eval(y), e, x, &[lo, hi]).unwrap();
            let (e1, e2) = (1e-3, 5e-4);
            let w = 2f64.powf(2.0 - 1.4);
            let rich = (w * t(e2) - t(e1)) / (w - 1.0);
            assert!((exact - rich).abs() < 1e-5 * exact.abs().max(1.0), "x {x}: {exact} vs {rich}");
        }
    }

    #[test]
    fn bump_laplacian_bounded_under_refinement() {
        let params = FracParams::new(1, 0.75).unwrap();
        let battery = TestBattery::new(3);
        let sup = |n: usize| {
            let grid = Grid::interval(n).unwrap();
            let table = assemble_operator(&grid, &params).unwrap();
            battery
                .bumps
                .iter()
                .map(|b| apply_operator(&table, &GridField::from_fn(grid.clone(), |x| b.eval(x))).unwrap().sup_norm())
                .fold(0.0, f64::max)
        };
        let (a, b) = (sup(128), sup(256));
        assert!(b < 1.1 * a);
    }

    #[test]
    fn verdict_bands() {
        assert_eq!(Verdict::of(1.0), Verdict::Stable);
        assert_eq!(Verdict::of(1.2), Verdict::Growing);
        assert_eq!(Verdict::of(1.07), Verdict::Indeterminate);
    }
}
