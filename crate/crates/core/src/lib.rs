//! Fractional elliptic problems with gradient nonlinearity and measure data
//! on the unit interval:
//!
//! `(-Δ)^α u = g(x, |∇u|) + σν` in `Ω = (-1, 1)`, `u = ρμ` in `ℝ∖Ω`.
//!
//! The solution is built as `u = v + ρℙ_α[μ]` with `v` a fixed point of
//! `v ↦ 𝔾_α[g(·, |∇(v + ρℙ_α[μ])|) + σν]`, where `𝔾_α` and `ℙ_α` are the
//! Green and Poisson operators of the interval.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod error;
pub mod fraclap;
pub mod green;
pub mod harness;
pub mod io;
pub mod model;
pub mod quad;
pub mod solver;

pub use error::{Error, Result};
pub use fraclap::{apply_operator, apply_truncated, assemble_operator, OperatorTable};
pub use green::{
    build_green, exterior_trace_density, green_apply, green_kernel_ball, nonlocal_normal_derivative, poisson_apply,
    GreenRoute, GreenTable, Source,
};
pub use io::{parse_spec, parse_spec_with_overrides};
pub use model::{
    critical_exponent, normalization_constant, validate_problem, Atom, Exterior, FracParams, Grid, GridField,
    GrowthSpec, ProblemSpec, RadonMeasure, SolverConfig, Support, ValidatedProblem,
};
pub use solver::{lambda_star, picard_solve, solve_full, Regime, SmallnessCoeffs, Solution, SolverContext};
