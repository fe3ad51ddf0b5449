//! Independent oracles and reporting for the acceptance suite.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use fracgreen_core::model::FracParams;
use fracgreen_core::quad;
use fracgreen_core::solver::{evaluate_f, Regime, SmallnessCoeffs};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {verdict} {} ({:.1}s): {}", self.id, self.title, self.seconds, self.detail)
    }
}

/// Runs `body`, which returns `(passed, detail)`; an `Err` counts as a
/// failure with the error as detail.
pub fn check<E: fmt::Display>(id: u8, title: &'static str, body: impl FnOnce() -> Result<(bool, String), E>) -> Criterion {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Path of a shipped CLI fixture.
pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/fixtures").join(format!("{name}.json"))
}

/// `(-Δ)^α (1-y²)_+^α` at `x` from
/// `C ∫_0^∞ (2u(x) - u(x+t) - u(x-t)) t^{-1-2α} dt`.
///
/// The integrand is split at the kinks `t = 1 ∓ |x|`, the part beyond
/// `1 + |x|` is `2u(x) t^{-1-2α}` in closed form, and below `t₀` the second
/// difference is replaced by `-u''(x) t²` to avoid cancellation.
pub fn getoor_oracle(params: &FracParams, x: f64) -> f64 {
    let a = params.alpha;
    let s = 2.0 * a;
    let u = |y: f64| (1.0 - y * y).max(0.0).powf(a);
    let w = 1.0 - x * x;
    let u2 = -2.0 * a * w.powf(a - 1.0) + 4.0 * a * (a - 1.0) * x * x * w.powf(a - 2.0);
    let t0: f64 = 1e-4;
    let f = |t: f64| (2.0 * u(x) - u(x + t) - u(x - t)) * t.powf(-1.0 - s);
    let (t1, t2) = (1.0 - x.abs(), 1.0 + x.abs());
    let core = -u2 * t0.powf(2.0 - s) / (2.0 - s);
    let near = quad::integrate(&f, t0, t1, 1e-13);
    let mid = quad::integrate(&f, t1, t2, 1e-13);
    let tail = 2.0 * u(x) * t2.powf(-s) / s;
    params.c_norm * (core + near + mid + tail)
}

/// `min_λ F(λ)` over `[1e-8, 1e8]`: a log grid with 200 points per decade,
/// refined by golden-section search in `log λ`.
pub fn min_smallness(k: &SmallnessCoeffs, regime: Regime) -> f64 {
    let g = |s: f64| evaluate_f(s.exp(), k, regime).unwrap_or(f64::INFINITY);
    let (lo, hi) = (1e-8f64.ln(), 1e8f64.ln());
    let m: usize = 16 * 200;
    let step = (hi - lo) / m as f64;
    let best = (0..=m).min_by(|&i, &j| g(lo + i as f64 * step).total_cmp(&g(lo + j as f64 * step))).unwrap();
    let (mut a, mut b) = (lo + best.saturating_sub(1) as f64 * step, (lo + (best + 1) as f64 * step).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-13 {
        let (c, d) = (b - r * (b - a), a + r * (b - a));
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    g(0.5 * (a + b)).min(g(lo + best as f64 * step))
}

/// The growth constant at which `min_λ F` crosses zero, by secant steps on
/// `c ↦ min_λ F` safeguarded by a bracket (Illinois variant).
pub fn threshold_by_secant(k: &SmallnessCoeffs, regime: Regime) -> f64 {
    let h = |c: f64| min_smallness(&SmallnessCoeffs { c, ..*k }, regime);
    let (mut a, mut fa) = (0.0, h(0.0));
    let mut b = if k.c > 0.0 { k.c } else { 1.0 };
    let mut fb = h(b);
    while fb <= 0.0 {
        a = b;
        fa = fb;
        b *= 2.0;
        fb = h(b);
    }
    let mut side = 0;
    for _ in 0..200 {
        let c = b - fb * (b - a) / (fb - fa);
        let fc = h(c);
        if fc == 0.0 || (b - a).abs() < 1e-14 * b {
            return c;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracgreen_core::green::torsion_constant;

    #[test]
    fn oracle_reproduces_the_getoor_constant() {
        for alpha in [0.6, 0.75, 0.9] {
            let p = FracParams::new(1, alpha).unwrap();
            for x in [0.0, 0.35, -0.8] {
                let v = getoor_oracle(&p, x);
                assert!(((v - torsion_constant(&p)) / v).abs() < 1e-6, "alpha {alpha} x {x}: {v}");
            }
        }
    }

    #[test]
    fn secant_threshold_of_a_closed_form_case() {
        // F(λ) = c₀(bλ^{p-1} + A/λ) - 1 with p = 2: min is 2c₀√(bA) - 1,
        // and b = 2c, A = ε‖f‖ + σC₀ when there is no Poisson part.
        let k = SmallnessCoeffs { c0: 0.5, c: 0.1, p: 2.0, eps_f_l1: 0.3, sigma_c0: 0.7, grad_p_poisson: 0.0, domain_vol: 2.0 };
        let exact = 1.0 / (4.0 * k.c0 * k.c0 * 2.0 * (k.eps_f_l1 + k.sigma_c0));
        let c = threshold_by_secant(&k, Regime::Superlinear);
        assert!(((c - exact) / exact).abs() < 1e-9, "{c} vs {exact}");
    }

    #[test]
    fn report_line_format() {
        let c = check(3, "demo", || Ok::<_, String>((true, "ok".into())));
        assert!(c.to_string().starts_with("criterion  3 PASS demo ("));
        let e = check(4, "demo", || Err::<(bool, String), _>("boom"));
        assert!(!e.passed && e.detail == "error: boom");
    }
}
