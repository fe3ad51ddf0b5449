//! Domain types: fractional parameters, the interval grid, grid fields,
//! Radon measures and problem specifications.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// `C_{N,α}`, the constant for which the singular integral and the Fourier
/// symbol `|ξ|^{2α}` define the same operator.
///
/// Valid for any `α ∈ (0, 1)`; the solver separately requires `α > 1/2`.
pub fn normalization_constant(dim: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OrderOutOfRange { alpha, range: "(0, 1)" });
    }
    if dim != 1 && dim != 2 {
        return Err(Error::UnsupportedDimension(dim, "1 or 2"));
    }
    let n = dim as f64;
    // Γ(-α) = Γ(1-α) / (-α), so the leading minus sign cancels.
    Ok(4f64.powf(alpha) * gamma(0.5 * n + alpha) * alpha / (PI.powf(0.5 * n) * gamma(1.0 - alpha)))
}

/// Critical gradient exponent `p* = N / (N - (2α - 1))`.
pub fn critical_exponent(dim: usize, alpha: f64) -> f64 {
    let n = dim as f64;
    n / (n - (2.0 * alpha - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub dim: usize,
    pub alpha: f64,
    pub c_norm: f64,
}

impl FracParams {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(Error::OrderOutOfRange { alpha, range: "(1/2, 1)" });
        }
        let c_norm = normalization_constant(dim, alpha)?;
        Ok(Self { dim, alpha, c_norm })
    }

    pub fn p_star(&self) -> f64 {
        critical_exponent(self.dim, self.alpha)
    }
}

/// Uniform grid on the unit interval `Ω = (-1, 1)`.
///
/// Interior nodes are `x_i = -1 + (i + 1) h`, `h = 2 / (n + 1)`; the two
/// boundary nodes `±1` are implicit and carry the value zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub nodes: Vec<f64>,
    pub dist: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 {
            return Err(Error::UnsupportedDimension(dim, "1 (the interval (-1, 1))"));
        }
        if n < 3 {
            return Err(Error::GridTooCoarse { n, min: 3 });
        }
        let h = 2.0 / (n as f64 + 1.0);
        let nodes: Vec<f64> = (1..=n).map(|i| -1.0 + i as f64 * h).collect();
        let dist = nodes.iter().map(|x| 1.0 - x.abs()).collect();
        Ok(Self { dim, n, h, nodes, dist })
    }

    pub fn interval(n: usize) -> Result<Arc<Self>> {
        Self::new(1, n).map(Arc::new)
    }

    /// Index of the node closest to `x` (clamped to the interior).
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x + 1.0) / self.h).round() as isize - 1;
        k.clamp(0, self.n as isize - 1) as usize
    }

    pub fn volume(&self) -> f64 {
        2.0
    }

    /// Trapezoidal integral of nodal values (the boundary values are zero).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.h
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}

/// How a grid field continues outside `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub enum Exterior {
    Zero,
    /// The field equals `weight · measure` on `ℝᴺ∖Ω`.
    Measure { measure: RadonMeasure, weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
    pub exterior: Exterior,
}

impl GridField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch { expected: grid.n, found: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "values", reason: format!("non-finite entry {v}") });
        }
        Ok(Self { grid, values, exterior: Exterior::Zero })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n;
        Self { grid, values: vec![0.0; n], exterior: Exterior::Zero }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.sample(f);
        Self { grid, values, exterior: Exterior::Zero }
    }

    pub fn with_exterior(mut self, exterior: Exterior) -> Self {
        self.exterior = exterior;
        self
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid.n != grid.n {
            return Err(Error::GridMismatch { expected: grid.n, found: self.grid.n });
        }
        Ok(())
    }

    /// Nodal gradient: central differences in the interior and one-sided
    /// second-order stencils at the two nodes adjacent to `∂Ω`.
    pub fn gradient(&self) -> Vec<f64> {
        gradient(&self.values, self.grid.h)
    }

    pub fn l1_norm(&self) -> f64 {
        lp_norm(&self.values, self.grid.h, 1.0)
    }

    pub fn grad_lp_norm(&self, p: f64) -> f64 {
        lp_norm(&self.gradient(), self.grid.h, p)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect(), exterior: Exterior::Zero }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid.clone(), values, exterior: Exterior::Zero }
    }
}

pub fn gradient(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    assert!(n >= 3, "gradient needs at least three nodes");
    let mut g = vec![0.0; n];
    g[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    for i in 1..n - 1 {
        g[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    g[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
    g
}

/// `(Σ |v_i|^p h)^{1/p}`; a quasi-norm for `p < 1`.
pub fn lp_norm(values: &[f64], h: f64, p: f64) -> f64 {
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * h).powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Interior,
    Exterior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: f64,
    pub mass: f64,
}

/// Nonnegative Radon measure: point masses plus an optional nodal density.
///
/// Atoms keep their exact coordinates; each consumer regularizes them as it
/// needs. Densities are only meaningful for interior measures.
#[derive(Debug, Clone, PartialEq)]
pub struct RadonMeasure {
    pub atoms: Vec<Atom>,
    pub density: Option<Vec<f64>>,
    pub support: Support,
    /// Required gap `δ_sep` between exterior atoms and `∂Ω`.
    pub separation: f64,
}

pub const DEFAULT_SEPARATION: f64 = 1e-2;

impl RadonMeasure {
    pub fn zero(support: Support) -> Self {
        Self { atoms: Vec::new(), density: None, support, separation: DEFAULT_SEPARATION }
    }

    pub fn interior(atoms: Vec<Atom>) -> Self {
        Self { atoms, ..Self::zero(Support::Interior) }
    }

    pub fn exterior(atoms: Vec<Atom>) -> Self {
        Self { atoms, ..Self::zero(Support::Exterior) }
    }

    pub fn boundary(atoms: Vec<Atom>) -> Self {
        Self { atoms, ..Self::zero(Support::Boundary) }
    }

    pub fn dirac(support: Support, point: f64, mass: f64) -> Self {
        Self { atoms: vec![Atom { point, mass }], ..Self::zero(support) }
    }

    pub fn with_density(mut self, density: Vec<f64>) -> Self {
        self.density = Some(density);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.mass == 0.0)
            && self.density.as_ref().is_none_or(|d| d.iter().all(|&v| v == 0.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        m.atoms.iter_mut().for_each(|a| a.mass *= factor);
        if let Some(d) = m.density.as_mut() {
            d.iter_mut().for_each(|v| *v *= factor);
        }
        m
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn total_mass(&self, grid: &Grid) -> f64 {
        self.atom_mass() + self.density.as_ref().map_or(0.0, |d| grid.integrate(d))
    }

    /// `∫ ξ dμ` with nodal trapezoid for the density part.
    pub fn pair(&self, grid: &Grid, xi: impl Fn(f64) -> f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.mass * xi(a.point)).sum();
        let density = self.density.as_ref().map_or(0.0, |d| {
            grid.nodes.iter().zip(d).map(|(&x, &v)| xi(x) * v).sum::<f64>() * grid.h
        });
        atoms + density
    }

    pub fn validate(&self, name: &'static str, grid: &Grid) -> Result<()> {
        for a in &self.atoms {
            if !(a.mass >= 0.0) || !a.mass.is_finite() {
                return Err(Error::NegativeMass { measure: name, point: a.point, mass: a.mass });
            }
            match self.support {
                Support::Interior if a.point.abs() >= 1.0 => {
                    return Err(Error::InteriorSupport { point: a.point })
                }
                Support::Exterior if a.point.abs() <= 1.0 + self.separation => {
                    return Err(Error::ExteriorSupport { point: a.point, separation: self.separation })
                }
                Support::Boundary if a.point.abs() != 1.0 => {
                    return Err(Error::BoundarySupport { point: a.point })
                }
                _ => {}
            }
        }
        if let Some(d) = &self.density {
            if self.support != Support::Interior {
                return Err(Error::WrongSupport(name, "densities are only supported for interior measures"));
            }
            if d.len() != grid.n {
                return Err(Error::GridMismatch { expected: grid.n, found: d.len() });
            }
            if let Some((i, &v)) = d.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
                return Err(Error::NegativeMass { measure: name, point: grid.nodes[i], mass: v });
            }
        }
        if self.support == Support::Exterior && !(self.separation > 0.0) {
            return Err(Error::InvalidParameter { name: "separation", reason: "must be positive".into() });
        }
        Ok(())
    }
}

/// `g(x, s) = c s^p + ε |f(x)|`, evaluated at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthSpec {
    pub c: f64,
    pub p: f64,
    pub eps: f64,
    pub f: Vec<f64>,
}

impl GrowthSpec {
    pub fn eval(&self, node: usize, s: f64) -> f64 {
        let power = if self.c == 0.0 { 0.0 } else { self.c * s.abs().powf(self.p) };
        power + self.eps * self.f[node].abs()
    }

    pub fn eps_f_l1(&self, grid: &Grid) -> f64 {
        self.eps * self.f.iter().map(|v| v.abs()).sum::<f64>() * grid.h
    }

    pub fn is_zero(&self) -> bool {
        self.c == 0.0 && (self.eps == 0.0 || self.f.iter().all(|&v| v == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Picard damping `θ ∈ (0, 1]`.
    pub theta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, theta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub params: FracParams,
    pub grid: Arc<Grid>,
    pub g: GrowthSpec,
    pub sigma: f64,
    pub rho: f64,
    pub nu: RadonMeasure,
    pub mu: RadonMeasure,
    pub eta: Option<RadonMeasure>,
    pub solver: SolverConfig,
}

/// A problem whose invariants have been checked; `p_star` is cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProblem {
    spec: ProblemSpec,
    pub p_star: f64,
}

impl std::ops::Deref for ValidatedProblem {
    type Target = ProblemSpec;
    fn deref(&self) -> &ProblemSpec {
        &self.spec
    }
}

impl ValidatedProblem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn into_spec(self) -> ProblemSpec {
        self.spec
    }

    /// Re-validate after modifying a copy of the underlying spec.
    pub fn modified(&self, f: impl FnOnce(&mut ProblemSpec)) -> Result<Self> {
        let mut spec = self.spec.clone();
        f(&mut spec);
        validate_problem(spec)
    }
}

pub fn validate_problem(spec: ProblemSpec) -> Result<ValidatedProblem> {
    let params = FracParams::new(spec.params.dim, spec.params.alpha)?;
    if ((spec.params.c_norm - params.c_norm) / params.c_norm).abs() > 1e-10 {
        return Err(Error::InvalidParameter {
            name: "c_norm",
            reason: format!("{} does not match C_(N,alpha) = {}", spec.params.c_norm, params.c_norm),
        });
    }
    if spec.grid.dim != params.dim {
        return Err(Error::UnsupportedDimension(spec.grid.dim, "grid dimension must match params.N"));
    }
    let p_star = params.p_star();
    let g = &spec.g;
    if !(g.p > 0.0 && g.p < p_star) {
        return Err(Error::Supercritical { p: g.p, p_star });
    }
    for (name, v) in [("g.c", g.c), ("g.eps", g.eps), ("sigma", spec.sigma), ("rho", spec.rho)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter { name, reason: format!("must be a finite nonnegative number, got {v}") });
        }
    }
    if g.f.len() != spec.grid.n {
        return Err(Error::GridMismatch { expected: spec.grid.n, found: g.f.len() });
    }
    if g.f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter { name: "g.f", reason: "non-finite value".into() });
    }
    if spec.nu.support != Support::Interior {
        return Err(Error::WrongSupport("nu", "nu must be an interior measure"));
    }
    if spec.mu.support != Support::Exterior {
        return Err(Error::WrongSupport("mu", "mu must be an exterior measure"));
    }
    spec.nu.validate("nu", &spec.grid)?;
    spec.mu.validate("mu", &spec.grid)?;
    if let Some(eta) = &spec.eta {
        if eta.support != Support::Boundary {
            return Err(Error::WrongSupport("eta", "eta must be a boundary measure"));
        }
        eta.validate("eta", &spec.grid)?;
    }
    let s = &spec.solver;
    if !(s.tol > 0.0) || s.max_iter == 0 || !(s.theta > 0.0 && s.theta <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "solver",
            reason: "need tol > 0, max_iter >= 1 and theta in (0, 1]".into(),
        });
    }
    Ok(ValidatedProblem { spec, p_star })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alpha: f64, p: f64) -> ProblemSpec {
        let grid = Grid::interval(32).unwrap();
        ProblemSpec {
            params: FracParams::new(1, alpha).unwrap(),
            g: GrowthSpec { c: 0.1, p, eps: 0.0, f: vec![0.0; grid.n] },
            grid,
            sigma: 1.0,
            rho: 0.0,
            nu: RadonMeasure::dirac(Support::Interior, 0.0, 1.0),
            mu: RadonMeasure::zero(Support::Exterior),
            eta: None,
            solver: SolverConfig::default(),
        }
    }

    #[test]
    fn constant_at_three_quarters() {
        let c = normalization_constant(1, 0.75).unwrap();
        assert!((c - 0.2992).abs() < 5e-5, "{c}");
    }

    #[test]
    fn constant_rejects_order_outside_unit_interval() {
        assert!(matches!(normalization_constant(1, 1.0), Err(Error::OrderOutOfRange { .. })));
        assert!(matches!(normalization_constant(1, 0.0), Err(Error::OrderOutOfRange { .. })));
        // valid for the formula even though the solver refuses it
        assert!(normalization_constant(1, 0.3).is_ok());
        assert!(FracParams::new(1, 0.3).is_err());
    }

    #[test]
    fn constant_vanishes_linearly_at_alpha_one() {
        // C_{1,α} ~ (1 - α)·const as α → 1, so the ratio stays bounded
        let r9 = normalization_constant(1, 0.9).unwrap() / (1.0 - 0.9);
        let r99 = normalization_constant(1, 0.99).unwrap() / (1.0 - 0.99);
        assert!(r9.is_finite() && r99.is_finite());
        assert!((r99 / r9) < 2.0 && (r99 / r9) > 0.5);
    }

    #[test]
    fn critical_exponent_values() {
        assert!((critical_exponent(1, 0.6) - 1.25).abs() < 1e-12);
        assert!((critical_exponent(1, 0.75) - 2.0).abs() < 1e-12);
        assert!((critical_exponent(2, 0.75) - 2.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_supercritical_p() {
        let err = validate_problem(spec(0.6, 1.5)).unwrap_err();
        assert!(matches!(err, Error::Supercritical { p_star, .. } if (p_star - 1.25).abs() < 1e-12));
        let ok = validate_problem(spec(0.75, 1.5)).unwrap();
        assert!((ok.p_star - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_measures() {
        let mut s = spec(0.75, 1.5);
        s.mu = RadonMeasure::dirac(Support::Exterior, 0.9, 1.0);
        assert!(matches!(validate_problem(s).unwrap_err(), Error::ExteriorSupport { .. }));

        let mut s = spec(0.75, 1.5);
        s.nu = RadonMeasure::dirac(Support::Interior, 0.0, -1.0);
        assert!(matches!(validate_problem(s).unwrap_err(), Error::NegativeMass { .. }));

        let mut s = spec(0.75, 1.5);
        s.eta = Some(RadonMeasure::dirac(Support::Boundary, 0.99, 1.0));
        assert!(matches!(validate_problem(s).unwrap_err(), Error::BoundarySupport { .. }));

        let mut s = spec(0.75, 1.5);
        s.params.alpha = 0.4;
        assert!(matches!(validate_problem(s).unwrap_err(), Error::OrderOutOfRange { .. }));
    }

    #[test]
    fn grid_nodes_strictly_inside() {
        let g = Grid::new(1, 17).unwrap();
        assert!(g.nodes.iter().all(|x| x.abs() < 1.0));
        assert!(g.dist.iter().zip(&g.nodes).all(|(d, x)| *d > 0.0 && (d - (1.0 - x.abs())).abs() < 1e-15));
        assert_eq!(g.nearest(0.0), 8);
        assert!(Grid::new(2, 16).is_err());
    }

    #[test]
    fn gradient_exact_for_quadratics() {
        let g = Grid::interval(20).unwrap();
        let f = GridField::from_fn(g.clone(), |x| 3.0 * x * x - x + 2.0);
        for (x, d) in g.nodes.iter().zip(f.gradient()) {
            assert!((d - (6.0 * x - 1.0)).abs() < 1e-10);
        }
    }
}
