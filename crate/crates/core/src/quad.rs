//! Adaptive quadrature on top of the double-exponential rule from the
//! `quadrature` crate. The rule tolerates endpoint singularities; interior
//! kinks must be passed as breakpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Subinterval budget per call.
const MAX_PIECES: usize = 2000;

struct Piece {
    a: f64,
    b: f64,
    integral: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn piece(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Piece {
    let out = quadrature::double_exponential::integrate(f, a, b, tol);
    Piece { a, b, integral: out.integral, error: out.error_estimate.abs() }
}

/// `∫_a^b f` to roughly `tol` absolute error, or round-off if that is
/// larger. The piece with the largest error estimate is bisected until the
/// estimates add up to less than the target.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    let first = piece(f, a, b, tol);
    let (mut total, mut error) = (first.integral, first.error);
    let mut heap = BinaryHeap::from([first]);
    while error > tol.max(1e-15 * total.abs()) && heap.len() < MAX_PIECES {
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            error -= worst.error;
            heap.push(Piece { error: 0.0, ..worst });
            continue;
        }
        let (left, right) = (piece(f, worst.a, m, 0.5 * tol), piece(f, m, worst.b, 0.5 * tol));
        total += left.integral + right.integral - worst.integral;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed the drift of the running updates
    heap.iter().map(|p| p.integral).sum()
}

/// Integrate over `[a, b]` split at the given interior breakpoints.
pub fn integrate_pieces(f: &impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    let share = tol / (pts.len() + 1) as f64;
    for &t in pts.iter().chain(std::iter::once(&b)) {
        total += integrate(f, lo, t, share);
        lo = t;
    }
    total
}

/// `∫_a^∞ f` via `x = a + s / (1 - s)`.
pub fn integrate_to_infinity(f: &impl Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    let g = |s: f64| {
        let one_minus = 1.0 - s;
        f(a + s / one_minus) / (one_minus * one_minus)
    };
    integrate(&g, 0.0, 1.0, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_singularity() {
        let v = integrate(&|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn kink_with_breakpoint() {
        let v = integrate_pieces(&|x: f64| (x - 0.3).abs().powf(0.5), -1.0, 1.0, &[0.3], 1e-12);
        let exact = (2.0 / 3.0) * (1.3f64.powf(1.5) + 0.7f64.powf(1.5));
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn semi_infinite_power() {
        let v = integrate_to_infinity(&|x: f64| x.powf(-2.5), 2.0, 1e-13);
        let exact = 2f64.powf(-1.5) / 1.5;
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }
}
