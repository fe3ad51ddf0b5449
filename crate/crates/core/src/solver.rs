//! Existence scheme for `(-Δ)^α u = g(x, |∇u|) + σν` in `Ω`, `u = ρμ`
//! outside: smallness functions, the radius `λ*`, approximation of the data
//! and the Picard loop for the truncated map `T_n`.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::{build_green, green_apply, poisson_apply, GreenRoute, GreenTable, Source};
use crate::harness::w1q_norm;
use crate::model::{Exterior, Grid, GridField, GrowthSpec, RadonMeasure, ValidatedProblem};

/// Radius of the mollifier at level `n` is `MOLLIFIER_R0 / n`.
pub const MOLLIFIER_R0: f64 = 0.5;

/// Default level schedule `n₀, 2n₀, 4n₀`.
pub const LEVELS: [usize; 3] = [16, 32, 64];

/// Iterates may exceed `λ*` by this factor before the run is rejected.
pub const BALL_SLACK: f64 = 1.05;

const SCAN_LO: f64 = 1e-8;
const SCAN_HI: f64 = 1e8;
const SCAN_PER_DECADE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `1 < p < p*`: gradient ball in `L^p`.
    Superlinear,
    /// `0 < p ≤ 1`: gradient ball in `L¹`.
    Sublinear,
}

impl Regime {
    pub fn of(p: f64) -> Self {
        if p > 1.0 {
            Regime::Superlinear
        } else {
            Regime::Sublinear
        }
    }

    /// Lebesgue exponent of the gradient ball.
    pub fn ball_exponent(self, p: f64) -> f64 {
        match self {
            Regime::Superlinear => p,
            Regime::Sublinear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallnessCoeffs {
    pub c0: f64,
    pub c: f64,
    pub p: f64,
    pub eps_f_l1: f64,
    pub sigma_c0: f64,
    /// `ρ^p ‖∇ℙ‖^p_{L^p}` (superlinear) or `ρ ‖∇ℙ‖_{L¹}` (sublinear).
    pub grad_p_poisson: f64,
    pub domain_vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub label: String,
    pub ratio: f64,
}

/// Empirical `L¹ → W^{1,p}` norm of `𝔾_α` with the probes that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C0Estimate {
    pub value: f64,
    pub probes: Vec<Probe>,
}

/// Unit Diracs at `0, ±1/4, ±1/2, ±3/4` and the uniform density.
pub fn default_probes() -> Vec<RadonMeasure> {
    let mut probes: Vec<RadonMeasure> = [0.0, -0.25, 0.25, -0.5, 0.5, -0.75, 0.75]
        .iter()
        .map(|&x| RadonMeasure::dirac(crate::model::Support::Interior, x, 1.0))
        .collect();
    probes.push(RadonMeasure::zero(crate::model::Support::Interior));
    probes
}

pub fn estimate_c0(table: &GreenTable, p: f64) -> Result<C0Estimate> {
    estimate_c0_with(table, p, &default_probes())
}

/// Max over probes of `‖∇𝔾_α[probe]‖_{L^p} / ‖probe‖_{L¹}`. A probe without
/// atoms or density stands for the uniform density of unit mass.
pub fn estimate_c0_with(table: &GreenTable, p: f64, probes: &[RadonMeasure]) -> Result<C0Estimate> {
    let grid = &table.grid;
    let mut out = Vec::with_capacity(probes.len());
    for probe in probes {
        let (label, field, mass) = if probe.is_zero() {
            let density = GridField::new(grid.clone(), vec![1.0 / grid.volume(); grid.n])?;
            ("uniform".to_string(), green_apply(table, Source::Field(&density))?, grid.integrate(&density.values))
        } else {
            let label = probe.atoms.iter().map(|a| format!("dirac({})", a.point)).collect::<Vec<_>>().join("+");
            let label = if probe.density.is_some() { format!("{label}+density") } else { label };
            (label, green_apply(table, Source::Measure(probe))?, probe.total_mass(grid))
        };
        out.push(Probe { label, ratio: field.grad_lp_norm(p) / mass });
    }
    let value = out.iter().fold(0.0f64, |m, p| m.max(p.ratio));
    Ok(C0Estimate { value, probes: out })
}

/// `F(λ)` (superlinear) or `𝔽(λ)` (sublinear).
pub fn evaluate_f(lambda: f64, k: &SmallnessCoeffs, regime: Regime) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter { name: "lambda", reason: format!("must be positive, got {lambda}") });
    }
    Ok(match regime {
        Regime::Superlinear => {
            let b = k.c * 2f64.powf(k.p - 1.0);
            k.c0 * (b * lambda.powf(k.p - 1.0) + (b * k.grad_p_poisson + k.eps_f_l1 + k.sigma_c0) / lambda) - 1.0
        }
        Regime::Sublinear => {
            // c·(ε‖f‖/c) is ε‖f‖, which keeps c = 0 well defined.
            let linear = k.c * (1.0 + (k.grad_p_poisson + k.domain_vol) / lambda) + k.eps_f_l1 / lambda;
            k.c0 * linear + k.c0 * k.sigma_c0 / lambda - 1.0
        }
    })
}

fn scan_points() -> Vec<f64> {
    let decades = (SCAN_HI / SCAN_LO).log10().round() as usize;
    (0..=decades * SCAN_PER_DECADE)
        .map(|i| SCAN_LO * 10f64.powf(i as f64 / SCAN_PER_DECADE as f64))
        .collect()
}

/// First bracket `[λ_lo, λ_hi]` with `F(λ_lo) > 0 ≥ F(λ_hi)`, or the lower
/// scan end when `F` is already nonpositive there. `F` is convex in `log λ`,
/// so when no scan point is nonpositive the minimum between the scan points
/// next to the smallest sample is located by golden-section search.
fn bracket(k: &SmallnessCoeffs, regime: Regime) -> Option<(f64, f64)> {
    let pts = scan_points();
    let f = |l: f64| evaluate_f(l, k, regime).unwrap_or(f64::INFINITY);
    if f(pts[0]) <= 0.0 {
        return Some((pts[0], pts[0]));
    }
    if let Some(w) = pts.windows(2).find(|w| f(w[1]) <= 0.0) {
        return Some((w[0], w[1]));
    }
    let i = (0..pts.len()).min_by(|&a, &b| f(pts[a]).total_cmp(&f(pts[b])))?;
    if i == 0 || i + 1 == pts.len() {
        return None;
    }
    let g = |s: f64| f(s.exp());
    let (mut a, mut b) = (pts[i - 1].ln(), pts[i + 1].ln());
    let r = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let m = (0.5 * (a + b)).exp();
    (f(m) <= 0.0).then_some((pts[i - 1], m))
}

/// Smallest positive root of the smallness function.
pub fn lambda_star(k: &SmallnessCoeffs, regime: Regime) -> Result<f64> {
    let Some((mut lo, mut hi)) = bracket(k, regime) else {
        return Err(Error::NoRoot { c: k.c, c_max: largest_admissible_c(k, regime) });
    };
    if lo == hi {
        return Ok(lo);
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if evaluate_f(mid, k, regime)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Supremum of the `c` for which the scan finds a root, by bisection on the
/// monotone map `c ↦ min_λ F(λ)`.
pub fn largest_admissible_c(k: &SmallnessCoeffs, regime: Regime) -> f64 {
    let admissible = |c: f64| bracket(&SmallnessCoeffs { c, ..*k }, regime).is_some();
    if !admissible(0.0) {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = if k.c > 0.0 { k.c } else { 1.0 };
    while admissible(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn mollifier(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q > 0.0 {
        q * q * q
    } else {
        0.0
    }
}

/// `ν_n`: each atom is spread with the kernel `(1 - s²)³` of radius
/// `MOLLIFIER_R0 / n`, a density is convolved with the same kernel, and the
/// nodal weights are rescaled so that the discrete mass is exact.
pub fn mollify_measure(nu: &RadonMeasure, n: usize, grid: &Arc<Grid>) -> Result<GridField> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", reason: "mollification level must be at least 1".into() });
    }
    if nu.support != crate::model::Support::Interior {
        return Err(Error::WrongSupport("exterior/boundary", "only interior measures are mollified"));
    }
    let r = MOLLIFIER_R0 / n as f64;
    let h = grid.h;
    let mut out = vec![0.0; grid.n];
    let mut spread = |point: f64, mass: f64| {
        if mass == 0.0 {
            return;
        }
        if point.abs() + r > 1.0 {
            log::warn!("atom at {point} is within {r} of the boundary; mollified mass clipped and renormalized");
        }
        let w: Vec<f64> = grid.nodes.iter().map(|&x| mollifier((x - point) / r)).collect();
        let total: f64 = w.iter().sum::<f64>() * h;
        if total > 0.0 {
            out.iter_mut().zip(&w).for_each(|(o, wi)| *o += mass * wi / total);
        } else {
            out[grid.nearest(point)] += mass / h;
        }
    };
    for a in &nu.atoms {
        spread(a.point, a.mass);
    }
    if let Some(d) = &nu.density {
        if d.len() != grid.n {
            return Err(Error::GridMismatch { expected: grid.n, found: d.len() });
        }
        let mut conv = vec![0.0; grid.n];
        let reach = (r / h).ceil() as isize;
        let norm: f64 = (-reach..=reach).map(|k| mollifier(k as f64 * h / r)).sum::<f64>() * h;
        for (i, c) in conv.iter_mut().enumerate() {
            for k in -reach..=reach {
                let j = i as isize + k;
                if j >= 0 && (j as usize) < grid.n {
                    *c += d[j as usize] * mollifier(k as f64 * h / r) * h / norm;
                }
            }
        }
        let before = grid.integrate(d);
        let after = grid.integrate(&conv);
        if after > 0.0 {
            conv.iter_mut().for_each(|v| *v *= before / after);
        }
        out.iter_mut().zip(conv).for_each(|(o, v)| *o += v);
    }
    GridField::new(grid.clone(), out)
}

/// `g_n(x, s) = min(g(x, s), n)`.
pub fn truncate_g(g: &GrowthSpec, n: usize) -> impl Fn(usize, f64) -> f64 + '_ {
    let cap = n as f64;
    move |node, s| g.eval(node, s).min(cap)
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub regime: Regime,
    pub level: usize,
    pub iterations: usize,
    pub theta: f64,
    pub lambda_star: f64,
    pub lambda_star_note: &'static str,
    pub coeffs: SmallnessCoeffs,
    pub c0: C0Estimate,
    pub residual_history: Vec<f64>,
    pub grad_lp_history: Vec<f64>,
    pub level_diffs: Vec<f64>,
    pub poisson_route_discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridField,
    /// `v = 𝔾_α[g_n(·, |∇u|) + σν_n]`.
    pub g_part: GridField,
    /// `ρℙ_α[μ]`.
    pub p_part: GridField,
    pub eta_part: Option<GridField>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub lambda_star: f64,
    pub grad_lp_history: Vec<f64>,
    pub level: usize,
    /// `‖u_n - u_{n/2}‖_{W^{1,max(p,1)}}` along the level schedule.
    pub level_diffs: Vec<f64>,
    pub theta: f64,
    pub regime: Regime,
    pub coeffs: SmallnessCoeffs,
    pub c0: C0Estimate,
    pub poisson_route_discrepancy: f64,
}

impl Solution {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            regime: self.regime,
            level: self.level,
            iterations: self.iterations,
            theta: self.theta,
            lambda_star: self.lambda_star,
            lambda_star_note: "heuristic: computed from an empirical lower bound on c0",
            coeffs: self.coeffs,
            c0: self.c0.clone(),
            residual_history: self.residual_history.clone(),
            grad_lp_history: self.grad_lp_history.clone(),
            level_diffs: self.level_diffs.clone(),
            poisson_route_discrepancy: self.poisson_route_discrepancy,
        }
    }

    /// Columns `x,u,g_part,p_part` (and `eta_part` when present).
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let eta = self.eta_part.as_ref();
        write!(out, "x,u,g_part,p_part")?;
        if eta.is_some() {
            write!(out, ",eta_part")?;
        }
        writeln!(out)?;
        for (i, x) in self.u.grid.nodes.iter().enumerate() {
            write!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e}",
                x, self.u.values[i], self.g_part.values[i], self.p_part.values[i]
            )?;
            if let Some(e) = eta {
                write!(out, ",{:.15e}", e.values[i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Everything a Picard run needs that does not depend on the level: the
/// Green table, the Poisson part, `c₀` and `λ*`.
#[derive(Debug, Clone)]
pub struct SolverContext {
    pub problem: ValidatedProblem,
    pub green: Arc<GreenTable>,
    pub regime: Regime,
    pub p_part: GridField,
    pub eta_part: Option<GridField>,
    pub c0: C0Estimate,
    pub coeffs: SmallnessCoeffs,
    pub lambda_star: f64,
    pub poisson_route_discrepancy: f64,
}

impl SolverContext {
    pub fn new(problem: &ValidatedProblem) -> Result<Self> {
        let green = build_green(&problem.grid, &problem.params, GreenRoute::Explicit)?;
        Self::with_green(problem, Arc::new(green), None)
    }

    /// `eta_source` is an extra fixed interior density whose Green potential
    /// is added to `u` (the lifted boundary measure).
    pub fn with_green(problem: &ValidatedProblem, green: Arc<GreenTable>, eta_source: Option<&GridField>) -> Result<Self> {
        if green.grid.n != problem.grid.n || green.params != problem.params {
            return Err(Error::GridMismatch { expected: problem.grid.n, found: green.grid.n });
        }
        let grid = &problem.grid;
        let g = &problem.g;
        let regime = Regime::of(g.p);
        let q = regime.ball_exponent(g.p);

        let (p_part, discrepancy) = if problem.rho > 0.0 && !problem.mu.is_zero() {
            let pp = poisson_apply(&problem.mu, &green)?;
            let mut field = pp.field.map(|v| problem.rho * v);
            field.exterior = Exterior::Measure { measure: problem.mu.clone(), weight: problem.rho };
            (field, pp.discrepancy)
        } else {
            (GridField::zeros(grid.clone()), 0.0)
        };
        let eta_part = eta_source.map(|s| green_apply(&green, Source::Field(s))).transpose()?;

        let c0 = estimate_c0(&green, q)?;
        let shift_grad = shift_field(&p_part, eta_part.as_ref()).grad_lp_norm(q);
        let grad_p_poisson = match regime {
            Regime::Superlinear => shift_grad.powf(g.p),
            Regime::Sublinear => shift_grad,
        };
        let sigma_mass = problem.nu.total_mass(grid) + 1.0;
        let coeffs = SmallnessCoeffs {
            c0: c0.value,
            c: g.c,
            p: g.p,
            eps_f_l1: g.eps_f_l1(grid),
            sigma_c0: problem.sigma * sigma_mass,
            grad_p_poisson,
            domain_vol: grid.volume(),
        };
        let lambda_star = lambda_star(&coeffs, regime)?;
        Ok(Self {
            problem: problem.clone(),
            green,
            regime,
            p_part,
            eta_part,
            c0,
            coeffs,
            lambda_star,
            poisson_route_discrepancy: discrepancy,
        })
    }

    fn shift(&self) -> GridField {
        shift_field(&self.p_part, self.eta_part.as_ref())
    }

    /// Fixed point of `T_n` at `level` by damped Picard iteration, started
    /// from `init` or from `𝔾_α[g_n(·, 0) + σν_n]`.
    pub fn picard(&self, level: usize, init: Option<&GridField>) -> Result<Solution> {
        let pb = &self.problem;
        let grid = &pb.grid;
        let q = self.regime.ball_exponent(pb.g.p);
        let bound = BALL_SLACK * self.lambda_star;
        let nu_n = mollify_measure(&pb.nu, level, grid)?;
        let g_n = truncate_g(&pb.g, level);
        let shift = self.shift();

        let apply_t = |v: &GridField, zero_gradient: bool| -> Result<GridField> {
            let grad = if zero_gradient { vec![0.0; grid.n] } else { shift.zip_with(v, |a, b| a + b).gradient() };
            let src: Vec<f64> = (0..grid.n).map(|i| g_n(i, grad[i].abs()) + pb.sigma * nu_n.values[i]).collect();
            green_apply(&self.green, Source::Field(&GridField::new(grid.clone(), src)?))
        };

        let mut v = match init {
            Some(v0) => {
                v0.check_grid(grid)?;
                v0.clone()
            }
            None => apply_t(&GridField::zeros(grid.clone()), true)?,
        };
        let mut grad_hist = vec![v.grad_lp_norm(q)];
        if grad_hist[0] > bound {
            return Err(Error::BallEscape { iteration: 0, norm: grad_hist[0], bound });
        }
        let mut theta = pb.solver.theta;
        let mut residuals = Vec::new();
        for k in 1..=pb.solver.max_iter {
            let t = apply_t(&v, false)?;
            let next = v.zip_with(&t, |a, b| (1.0 - theta) * a + theta * b);
            let diff = lp_diff(&next, &v);
            let scale = next.l1_norm();
            let res = if scale > 0.0 { diff / scale } else { diff };
            if residuals.last().is_some_and(|&prev| res > prev) && theta > 1.0 / 64.0 {
                theta *= 0.5;
                log::debug!("residual increased at iteration {k}; damping lowered to {theta}");
            }
            residuals.push(res);
            v = next;
            let norm = v.grad_lp_norm(q);
            grad_hist.push(norm);
            if norm > bound {
                return Err(Error::BallEscape { iteration: k, norm, bound });
            }
            if res <= pb.solver.tol {
                return Ok(self.assemble(v, k, residuals, grad_hist, level, theta));
            }
        }
        Err(Error::NonConvergence { iterations: pb.solver.max_iter, residual: residuals.last().copied().unwrap_or(f64::NAN) })
    }

    fn assemble(&self, v: GridField, iterations: usize, residual_history: Vec<f64>, grad_lp_history: Vec<f64>, level: usize, theta: f64) -> Solution {
        let mut u = v.zip_with(&self.shift(), |a, b| a + b);
        u.exterior = self.p_part.exterior.clone();
        Solution {
            u,
            g_part: v,
            p_part: self.p_part.clone(),
            eta_part: self.eta_part.clone(),
            iterations,
            residual_history,
            lambda_star: self.lambda_star,
            grad_lp_history,
            level,
            level_diffs: Vec::new(),
            theta,
            regime: self.regime,
            coeffs: self.coeffs,
            c0: self.c0.clone(),
            poisson_route_discrepancy: self.poisson_route_discrepancy,
        }
    }

    /// Picard runs over `levels`, each warm-started from the previous one.
    pub fn solve_levels(&self, levels: &[usize]) -> Result<Solution> {
        let q = self.regime.ball_exponent(self.problem.g.p);
        let mut prev: Option<Solution> = None;
        let mut diffs = Vec::new();
        for &n in levels {
            let sol = self.picard(n, prev.as_ref().map(|s| &s.g_part))?;
            if let Some(p) = &prev {
                diffs.push(w1q_norm(&sol.u.zip_with(&p.u, |a, b| a - b), q)?);
            }
            prev = Some(sol);
        }
        let mut sol = prev.ok_or(Error::BadSchedule)?;
        if diffs.windows(2).any(|w| w[1] > w[0]) {
            log::warn!("level differences are not decreasing: {diffs:?}");
        }
        sol.level_diffs = diffs;
        Ok(sol)
    }

    pub fn solve_full(&self) -> Result<Solution> {
        self.solve_levels(&LEVELS)
    }
}

fn shift_field(p_part: &GridField, eta_part: Option<&GridField>) -> GridField {
    match eta_part {
        Some(e) => p_part.zip_with(e, |a, b| a + b),
        None => p_part.map(|v| v),
    }
}

fn lp_diff(a: &GridField, b: &GridField) -> f64 {
    a.zip_with(b, |x, y| x - y).l1_norm()
}

/// One Picard run at a single level.
pub fn picard_solve(problem: &ValidatedProblem, level: usize) -> Result<Solution> {
    SolverContext::new(problem)?.picard(level, None)
}

/// Picard runs over the default level schedule.
pub fn solve_full(problem: &ValidatedProblem) -> Result<Solution> {
    SolverContext::new(problem)?.solve_full()
}
