//! Green kernel of `(-Δ)^α` on `(-1, 1)`, the Green operator `𝔾_α`, the
//! exterior trace density `w_μ`, the Poisson potential `ℙ_α[μ] = 𝔾_α[w_μ]`
//! and the nonlocal normal derivative `𝒩_α`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fraclap::{assemble_operator, OperatorTable};
use crate::model::{Exterior, FracParams, Grid, GridField, RadonMeasure, Support};
use crate::quad;

/// Below this separation the kernel refuses to evaluate.
pub const KERNEL_SINGULAR_DIST: f64 = 1e-12;

/// Route tolerance used by [`poisson_apply`].
pub const POISSON_ROUTE_TOL: f64 = 2e-2;

/// Constant value of `(-Δ)^α (1 - |x|²)_+^α` inside the ball.
pub fn torsion_constant(params: &FracParams) -> f64 {
    let n = params.dim as f64;
    let a = params.alpha;
    4f64.powf(a) * gamma(a + 1.0) * gamma(0.5 * n + a) / gamma(0.5 * n)
}

/// `𝔾_α[1](x) = (1 - |x|²)_+^α / torsion_constant`.
pub fn torsion_profile(params: &FracParams, x: f64) -> f64 {
    (1.0 - x * x).max(0.0).powf(params.alpha) / torsion_constant(params)
}

fn kernel_prefactor(params: &FracParams) -> f64 {
    let n = params.dim as f64;
    let a = params.alpha;
    gamma(0.5 * n) / (4f64.powf(a) * PI.powf(0.5 * n) * gamma(a) * gamma(a))
}

const GL16_X: [f64; 16] = [
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.755404408355003, -0.6178762444026438,
    -0.45801677765722737, -0.2816035507792589, -0.09501250983763745, 0.09501250983763745, 0.2816035507792589,
    0.45801677765722737, 0.6178762444026438, 0.755404408355003, 0.8656312023878318, 0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 16] = [
    0.027152459411754037, 0.062253523938647706, 0.09515851168249259, 0.12462897125553403, 0.14959598881657676,
    0.16915651939500262, 0.1826034150449236, 0.18945061045506859, 0.18945061045506859, 0.1826034150449236,
    0.16915651939500262, 0.14959598881657676, 0.12462897125553403, 0.09515851168249259, 0.062253523938647706,
    0.027152459411754037,
];

/// `∫_0^{r0} t^{α-1} (1 + t)^{-1/2} dt`.
///
/// Binomial series in `t` on `[0, 1/2]`, in `1/t` on `[2, r0]`, and a
/// 16-point Gauss-Legendre rule in between where the integrand is analytic.
pub fn incomplete_integral(alpha: f64, r0: f64) -> f64 {
    let lo = r0.min(0.5);
    let mut total = 0.0;

    // Σ b_k lo^{k+α} / (k+α), b_k the coefficients of (1+t)^{-1/2}.
    let mut b = 1.0;
    let mut pow = lo.powf(alpha);
    for k in 0..200 {
        let term = b * pow / (k as f64 + alpha);
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
        b *= -(0.5 + k as f64) / (k as f64 + 1.0);
        pow *= lo;
    }
    if r0 <= 0.5 {
        return total;
    }

    let hi = r0.min(2.0);
    let (mid, half) = (0.5 * (hi + 0.5), 0.5 * (hi - 0.5));
    total += half
        * GL16_X
            .iter()
            .zip(GL16_W)
            .map(|(&x, w)| {
                let t = mid + half * x;
                w * t.powf(alpha - 1.0) / (1.0 + t).sqrt()
            })
            .sum::<f64>();
    if r0 <= 2.0 {
        return total;
    }

    // t = 1/u: ∫_{1/r0}^{1/2} u^{-α-1/2} (1+u)^{-1/2} du.
    let e = 0.5 - alpha;
    let (u_hi, u_lo) = (0.5f64, 1.0 / r0);
    let mut b = 1.0;
    let (mut p_hi, mut p_lo) = (u_hi.powf(e), u_lo.powf(e));
    for k in 0..200 {
        let ke = k as f64 + e;
        let term = b * (p_hi - p_lo) / ke;
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
        b *= -(0.5 + k as f64) / (k as f64 + 1.0);
        p_hi *= u_hi;
        p_lo *= u_lo;
    }
    total
}

/// Green kernel of the unit interval (Blumenthal-Getoor-Ray):
/// `G(x, y) = κ |x - y|^{2α-1} ∫_0^{r0} t^{α-1} (1 + t)^{-1/2} dt`,
/// `r0 = (1 - x²)(1 - y²) / |x - y|²`.
pub fn green_kernel_ball(x: f64, y: f64, params: &FracParams) -> Result<f64> {
    if params.dim != 1 {
        return Err(Error::UnsupportedDimension(params.dim, "1"));
    }
    if x.abs() >= 1.0 || y.abs() >= 1.0 {
        return Ok(0.0);
    }
    let r = (x - y).abs();
    if r < KERNEL_SINGULAR_DIST {
        return Err(Error::KernelSingularity(r));
    }
    let r0 = (1.0 - x * x) * (1.0 - y * y) / (r * r);
    Ok(kernel_prefactor(params) * r.powf(2.0 * params.alpha - 1.0) * incomplete_integral(params.alpha, r0))
}

/// `lim_{y→x} G(x, y) = κ (1 - x²)^{2α-1} / (α - 1/2)`; finite for N = 1.
pub fn green_on_diagonal(x: f64, params: &FracParams) -> f64 {
    let a = params.alpha;
    kernel_prefactor(params) * (1.0 - x * x).powf(2.0 * a - 1.0) / (a - 0.5)
}

fn kernel_or_limit(x: f64, y: f64, params: &FracParams) -> f64 {
    green_kernel_ball(x, y, params).unwrap_or_else(|_| green_on_diagonal(x, params))
}

/// Average of `G(x, ·)` over `[x - h/2, x + h/2]`.
fn cell_average(x: f64, h: f64, params: &FracParams) -> f64 {
    let f = |y: f64| kernel_or_limit(x, y, params);
    quad::integrate_pieces(&f, x - 0.5 * h, x + 0.5 * h, &[x], 1e-14) / h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenRoute {
    /// Entries from the closed-form kernel; diagonal by cell averages.
    Explicit,
    /// `G = A⁻¹ / h`: the response to a discrete Dirac `1/h` at one node.
    NumericInverse,
}

#[derive(Debug, Clone)]
pub struct GreenTable {
    pub grid: Arc<Grid>,
    pub params: FracParams,
    pub matrix: DMatrix<f64>,
    pub route: GreenRoute,
}

impl GreenTable {
    pub fn explicit(grid: &Arc<Grid>, params: &FracParams) -> Result<Self> {
        let n = grid.n;
        let x = &grid.nodes;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i..n)
                    .map(|j| {
                        if i == j {
                            Ok(cell_average(x[i], grid.h, params))
                        } else {
                            green_kernel_ball(x[i], x[j], params)
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut matrix = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                matrix[(i, i + k)] = v;
                matrix[(i + k, i)] = v;
            }
        }
        Ok(Self { grid: grid.clone(), params: *params, matrix, route: GreenRoute::Explicit })
    }

    pub fn numeric_inverse(op: &OperatorTable) -> Result<Self> {
        let lu = op.matrix.clone().lu();
        let mut inv = lu.try_inverse().ok_or(Error::SingularSystem)?;
        inv /= op.grid.h;
        // A is symmetric; remove round-off asymmetry.
        let matrix = (&inv + inv.transpose()) * 0.5;
        Ok(Self { grid: op.grid.clone(), params: op.params, matrix, route: GreenRoute::NumericInverse })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// `𝔾_α[δ_y]` sampled at the nodes.
    pub fn dirac_response(&self, y: f64, mass: f64) -> Result<Vec<f64>> {
        match self.route {
            GreenRoute::Explicit => self
                .grid
                .nodes
                .iter()
                .enumerate()
                .map(|(i, &x)| match green_kernel_ball(x, y, &self.params) {
                    Ok(v) => Ok(mass * v),
                    Err(Error::KernelSingularity(_)) => Ok(mass * self.matrix[(i, i)]),
                    Err(e) => Err(e),
                })
                .collect(),
            GreenRoute::NumericInverse => {
                let j = self.grid.nearest(y);
                Ok(self.matrix.column(j).iter().map(|v| mass * v).collect())
            }
        }
    }
}

pub fn build_green(grid: &Arc<Grid>, params: &FracParams, route: GreenRoute) -> Result<GreenTable> {
    match route {
        GreenRoute::Explicit => GreenTable::explicit(grid, params),
        GreenRoute::NumericInverse => GreenTable::numeric_inverse(&assemble_operator(grid, params)?),
    }
}

/// Source for [`green_apply`].
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Measure(&'a RadonMeasure),
    Field(&'a GridField),
}

/// `𝔾_α[source]`: trapezoid against the table rows for densities, direct
/// kernel columns for atoms.
pub fn green_apply(table: &GreenTable, source: Source<'_>) -> Result<GridField> {
    let n = table.n();
    let mut out = vec![0.0; n];
    let mut add_density = |d: &[f64]| {
        let v = &table.matrix * DVector::from_column_slice(d) * table.grid.h;
        out.iter_mut().zip(v.iter()).for_each(|(o, v)| *o += v);
    };
    match source {
        Source::Field(f) => {
            f.check_grid(&table.grid)?;
            add_density(&f.values);
        }
        Source::Measure(m) => {
            if m.support != Support::Interior {
                return Err(Error::WrongSupport("exterior/boundary", "the Green operator takes interior sources; use poisson_apply"));
            }
            if let Some(d) = &m.density {
                if d.len() != n {
                    return Err(Error::GridMismatch { expected: n, found: d.len() });
                }
                add_density(d);
            }
            for a in &m.atoms {
                let col = table.dirac_response(a.point, a.mass)?;
                out.iter_mut().zip(col).for_each(|(o, v)| *o += v);
            }
        }
    }
    GridField::new(table.grid.clone(), out)
}

/// `w_μ(x) = C ∫ |z - x|^{-1-2α} dμ(z)` for exterior `μ`.
pub fn exterior_trace_density(mu: &RadonMeasure, grid: &Arc<Grid>, params: &FracParams) -> Result<GridField> {
    if mu.support != Support::Exterior {
        return Err(Error::WrongSupport("interior/boundary", "w_mu needs an exterior measure"));
    }
    for a in &mu.atoms {
        if a.point.abs() <= 1.0 {
            return Err(Error::NotExterior(a.point));
        }
    }
    let s = 2.0 * params.alpha;
    Ok(GridField::from_fn(grid.clone(), |x| {
        params.c_norm * mu.atoms.iter().map(|a| a.mass * (a.point - x).abs().powf(-1.0 - s)).sum::<f64>()
    }))
}

#[derive(Debug, Clone)]
pub struct PoissonPotential {
    /// `𝔾_α[w_μ]`, with exterior extension `μ`.
    pub field: GridField,
    /// The direct route `-∫ 𝒩_α G(x, ·) dμ` at the nodes.
    pub direct: Vec<f64>,
    /// `max |route a - route b| / max |route b|`.
    pub discrepancy: f64,
}

pub fn poisson_apply(mu: &RadonMeasure, table: &GreenTable) -> Result<PoissonPotential> {
    poisson_apply_with_tolerance(mu, table, POISSON_ROUTE_TOL)
}

/// `ℙ_α[μ]` by two routes: `𝔾_α[w_μ]` on the table (returned) and the
/// direct kernel integral `C ∫_Ω G(x, y) |z - y|^{-1-2α} dy` per atom.
pub fn poisson_apply_with_tolerance(mu: &RadonMeasure, table: &GreenTable, tolerance: f64) -> Result<PoissonPotential> {
    let grid = &table.grid;
    let params = &table.params;
    let w_mu = exterior_trace_density(mu, grid, params)?;
    let mut field = green_apply(table, Source::Field(&w_mu))?;
    field.exterior = Exterior::Measure { measure: mu.clone(), weight: 1.0 };
    if mu.is_zero() {
        return Ok(PoissonPotential { direct: vec![0.0; grid.n], field, discrepancy: 0.0 });
    }

    let s = 2.0 * params.alpha;
    let direct: Vec<f64> = grid
        .nodes
        .par_iter()
        .map(|&x| {
            mu.atoms
                .iter()
                .map(|a| {
                    let f = |y: f64| kernel_or_limit(x, y, params) * (a.point - y).abs().powf(-1.0 - s);
                    a.mass * params.c_norm * quad::integrate_pieces(&f, -1.0, 1.0, &[x], 1e-13)
                })
                .sum()
        })
        .collect();
    let scale = direct.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = field.values.iter().zip(&direct).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let discrepancy = if scale > 0.0 { diff / scale } else { diff };
    if discrepancy > tolerance {
        return Err(Error::RouteInconsistency { discrepancy, tolerance });
    }
    Ok(PoissonPotential { field, direct, discrepancy })
}

/// `𝒩_α φ(z) = C ∫_Ω (φ(z) - φ(y)) |z - y|^{-1-2α} dy` for zero-extended
/// `φ`, i.e. `-C ∫_Ω φ(y) |z - y|^{-1-2α} dy`. The nodal values are
/// interpolated piecewise-linearly (zero at `±1`) and each cell is
/// integrated exactly.
pub fn nonlocal_normal_derivative(phi: &GridField, z: f64, params: &FracParams) -> Result<f64> {
    if z.abs() <= 1.0 {
        return Err(Error::NotExterior(z));
    }
    let s = 2.0 * params.alpha;
    let grid = &phi.grid;
    let n = grid.n;
    let value = |k: usize| if k == 0 || k == n + 1 { 0.0 } else { phi.values[k - 1] };
    let position = |k: usize| -1.0 + k as f64 * grid.h;
    let mut total = 0.0;
    for k in 0..=n {
        let (ya, yb) = (position(k), position(k + 1));
        let (va, vb) = (value(k), value(k + 1));
        if va == 0.0 && vb == 0.0 {
            continue;
        }
        // r = |z - y| is monotone on the cell; φ is linear in r.
        let (ra, rb) = ((z - ya).abs(), (z - yb).abs());
        let (r_lo, r_hi, v_lo, v_hi) = if ra < rb { (ra, rb, va, vb) } else { (rb, ra, vb, va) };
        let slope = (v_hi - v_lo) / (r_hi - r_lo);
        let i0 = (r_lo.powf(-s) - r_hi.powf(-s)) / s;
        let i1 = (r_hi.powf(1.0 - s) - r_lo.powf(1.0 - s)) / (1.0 - s);
        total += (v_lo - slope * r_lo) * i0 + slope * i1;
    }
    Ok(-params.c_norm * total)
}

/// [`nonlocal_normal_derivative`] for a callback supported in `[lo, hi] ⊂ Ω`.
pub fn nonlocal_normal_derivative_fn(
    phi: &impl Fn(f64) -> f64,
    support: (f64, f64),
    z: f64,
    params: &FracParams,
) -> Result<f64> {
    if z.abs() <= 1.0 {
        return Err(Error::NotExterior(z));
    }
    let s = 2.0 * params.alpha;
    let f = |y: f64| phi(y) * (z - y).abs().powf(-1.0 - s);
    Ok(-params.c_norm * quad::integrate(&f, support.0, support.1, 1e-14))
}
