//! Dense discretization of `(-Δ)^α` on `(-1, 1)` with zero extension.
//!
//! The interior integral `C ∫_Ω (u(x) - u(y)) |x - y|^{-1-2α} dy` is split
//! into a singular cell `|y - x_i| < h` and the far field. On the far field
//! `u` is replaced by its piecewise-linear interpolant (vanishing at `±1`)
//! and every hat function is integrated exactly against the kernel. On the
//! singular cell the symmetric difference is expanded to second order,
//! `-u''(x_i) z²`, with `u''` taken from the three-point stencil. The
//! leading interpolation error of the far field is also proportional to
//! `u'' h^{2-2α}` and is folded into the same stencil coefficient, which
//! keeps the matrix symmetric and of M-type.
//!
//! The exterior contributes `u(x_i) · C ∫_{|y|>1} |x_i - y|^{-1-2α} dy`,
//! evaluated in closed form.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::green::exterior_trace_density;
use crate::model::{Exterior, FracParams, Grid, GridField};
use crate::quad;

/// Fewer nodes than this leave no far field beyond the singular cells.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone)]
pub struct OperatorTable {
    pub grid: Arc<Grid>,
    pub params: FracParams,
    /// Full matrix, diagonal included.
    pub matrix: DMatrix<f64>,
    /// `C ∫_{ℝ∖Ω} |x_i - y|^{-1-2α} dy`.
    pub tail: Vec<f64>,
    /// Kernel mass carried by the implicit boundary nodes `±1`: the inner
    /// halves of their hat functions plus the stencil term of the two nodes
    /// adjacent to `∂Ω`. Row sums equal `tail + boundary_mass`.
    pub boundary_mass: Vec<f64>,
}

impl OperatorTable {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.matrix[(i, i)]
    }

    /// Dump the weight matrix as CSV (`i,j,weight`, nonzero entries only).
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "i,j,weight")?;
        for i in 0..self.n() {
            for j in 0..self.n() {
                writeln!(out, "{i},{j},{:.15e}", self.matrix[(i, j)])?;
            }
        }
        Ok(())
    }
}

/// `C ∫_{|y|>1} |x - y|^{-1-2α} dy = C [(1-x)^{-2α} + (1+x)^{-2α}] / (2α)`.
pub fn exterior_tail(params: &FracParams, x: f64) -> f64 {
    let s = 2.0 * params.alpha;
    params.c_norm * ((1.0 - x).powf(-s) + (1.0 + x).powf(-s)) / s
}

/// `∫_a^b ρ^{m-1-s} dρ`, written to avoid cancellation when `b - a ≪ a`.
fn power_integral(m: f64, s: f64, a: f64, b: f64) -> f64 {
    let e = m - s;
    if a == 0.0 {
        return b.powf(e) / e;
    }
    a.powf(e) * (e * ((b - a) / a).ln_1p()).exp_m1() / e
}

/// `∫ hat(ρ) ρ^{-1-s} dρ` for the hat centred at integer offset `k ≥ 1`,
/// restricted to `ρ ≥ 1`, in units where `h = 1`.
fn hat_weight(k: usize, s: f64) -> f64 {
    let kf = k as f64;
    let falling = (kf + 1.0) * power_integral(0.0, s, kf, kf + 1.0) - power_integral(1.0, s, kf, kf + 1.0);
    if k == 1 {
        falling
    } else {
        falling + rising_weight(k, s)
    }
}

/// Rising half `∫_{k-1}^{k} (ρ - (k-1)) ρ^{-1-s} dρ`.
fn rising_weight(k: usize, s: f64) -> f64 {
    let kf = k as f64;
    power_integral(1.0, s, kf - 1.0, kf) - (kf - 1.0) * power_integral(0.0, s, kf - 1.0, kf)
}

/// `Σ_{k≥1} ∫_k^{k+1} (t - k)(k + 1 - t) t^{-1-s} dt`: the far-field linear
/// interpolation error per unit `u'' h^{2-s}`, summed over both sides.
pub(crate) fn interpolation_error_constant(s: f64) -> f64 {
    const K0: usize = 64;
    let head: f64 = (1..K0)
        .map(|k| {
            let kf = k as f64;
            quad::integrate(&|t: f64| (t - kf) * (kf + 1.0 - t) * t.powf(-1.0 - s), kf, kf + 1.0, 1e-16)
        })
        .sum();
    // Σ_{k≥K0} (k + τ)^{-σ} by Euler-Maclaurin, σ = 1 + s.
    let sigma = 1.0 + s;
    let hurwitz = |a: f64| {
        a.powf(1.0 - sigma) / (sigma - 1.0) + 0.5 * a.powf(-sigma) + sigma * a.powf(-sigma - 1.0) / 12.0
            - sigma * (sigma + 1.0) * (sigma + 2.0) * a.powf(-sigma - 3.0) / 720.0
    };
    let tail = quad::integrate(&|tau: f64| tau * (1.0 - tau) * hurwitz(K0 as f64 + tau), 0.0, 1.0, 1e-16);
    head + tail
}

pub fn assemble_operator(grid: &Arc<Grid>, params: &FracParams) -> Result<OperatorTable> {
    let n = grid.n;
    if n < MIN_NODES {
        return Err(Error::GridTooCoarse { n, min: MIN_NODES });
    }
    let s = 2.0 * params.alpha;
    let h = grid.h;
    let scale = params.c_norm * h.powf(-s);
    let stencil = scale * (1.0 / (2.0 - s) - interpolation_error_constant(s));

    let far: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { scale * hat_weight(k, s) }).collect();
    let tail: Vec<f64> = grid.nodes.iter().map(|&x| exterior_tail(params, x)).collect();

    let mut matrix = DMatrix::zeros(n, n);
    let mut boundary_mass = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let k = i.abs_diff(j);
                matrix[(i, j)] = -far[k] - if k == 1 { stencil } else { 0.0 };
            }
        }
        // Offsets, in cells, to the boundary nodes at -1 and +1.
        let to_left = i + 1;
        let to_right = n - i;
        let mut b = 0.0;
        for d in [to_left, to_right] {
            b += if d == 1 { stencil } else { scale * rising_weight(d, s) };
        }
        boundary_mass[i] = b;

        // Kernel mass on Ω minus the singular cell, both sides.
        let mass: f64 = [to_left, to_right]
            .iter()
            .map(|&d| params.c_norm * (h.powf(-s) - (d as f64 * h).powf(-s)) / s)
            .sum();
        matrix[(i, i)] = mass + 2.0 * stencil + tail[i];
    }

    Ok(OperatorTable { grid: grid.clone(), params: *params, matrix, tail, boundary_mass })
}

/// Discrete `(-Δ)^α u` at interior nodes. A measure exterior
/// `u = w · μ` on `ℝ∖Ω` contributes `-w · w_μ(x_i)`.
pub fn apply_operator(table: &OperatorTable, u: &GridField) -> Result<GridField> {
    u.check_grid(&table.grid)?;
    let v = &table.matrix * DVector::from_column_slice(&u.values);
    let mut values: Vec<f64> = v.iter().copied().collect();
    if let Exterior::Measure { measure, weight } = &u.exterior {
        let w_mu = exterior_trace_density(measure, &table.grid, &table.params)?;
        for (out, w) in values.iter_mut().zip(&w_mu.values) {
            *out -= weight * w;
        }
    }
    GridField::new(table.grid.clone(), values)
}

/// Truncated operator `(-Δ)^α_ε u(x)` by adaptive quadrature. `u` is read on
/// `[-1, 1]` only and treated as zero outside.
pub fn apply_truncated(params: &FracParams, u: &impl Fn(f64) -> f64, eps: f64, x: f64) -> Result<f64> {
    apply_truncated_with_breaks(params, u, eps, x, &[])
}

/// As [`apply_truncated`], with extra breakpoints (in `y`) where `u` is not smooth.
pub fn apply_truncated_with_breaks(
    params: &FracParams,
    u: &impl Fn(f64) -> f64,
    eps: f64,
    x: f64,
    breaks: &[f64],
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter { name: "eps", reason: format!("truncation radius must be positive, got {eps}") });
    }
    let s = 2.0 * params.alpha;
    let ext = |y: f64| if y.abs() <= 1.0 { u(y) } else { 0.0 };
    let ux = ext(x);
    let reach = 1.0 + x.abs();
    let integrand = |z: f64| (2.0 * ux - ext(x + z) - ext(x - z)) * z.powf(-1.0 - s);
    let mut zbreaks = vec![1.0 - x, 1.0 + x];
    zbreaks.extend(breaks.iter().map(|b| (b - x).abs()));
    let scale = ux.abs().max(1e-3);
    let near = if eps < reach { quad::integrate_pieces(&integrand, eps, reach, &zbreaks, 1e-12 * scale) } else { 0.0 };
    let far = 2.0 * ux * eps.max(reach).powf(-s) / s;
    Ok(params.c_norm * (near + far))
}
