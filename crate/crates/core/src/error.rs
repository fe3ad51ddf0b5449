use thiserror::Error;

/// Everything that can go wrong while validating, assembling or solving.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("order alpha = {alpha} must lie in {range}")]
    OrderOutOfRange { alpha: f64, range: &'static str },

    #[error("dimension N = {0} is not supported (expected {1})")]
    UnsupportedDimension(usize, &'static str),

    #[error("growth exponent p = {p} is not subcritical: requires 0 < p < p* = {p_star}")]
    Supercritical { p: f64, p_star: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("measure `{measure}` has a negative mass {mass} at {point}")]
    NegativeMass { measure: &'static str, point: f64, mass: f64 },

    #[error("exterior measure atom at {point} violates the separation |z| > 1 + {separation}")]
    ExteriorSupport { point: f64, separation: f64 },

    #[error("interior measure atom at {point} lies outside the open unit ball")]
    InteriorSupport { point: f64 },

    #[error("boundary measure atom at {point} is not on the unit sphere")]
    BoundarySupport { point: f64 },

    #[error("grid too coarse: n = {n}, at least {min} nodes are needed")]
    GridTooCoarse { n: usize, min: usize },

    #[error("grid mismatch: field has {found} nodes, operator expects {expected}")]
    GridMismatch { expected: usize, found: usize },

    #[error("kernel singularity: |x - y| = {0:e} is below the safe threshold")]
    KernelSingularity(f64),

    #[error("point {0} is not in the exterior of the closed unit ball")]
    NotExterior(f64),

    #[error("measure tagged {0} cannot be used here ({1})")]
    WrongSupport(&'static str, &'static str),

    #[error("dense linear system is singular")]
    SingularSystem,

    #[error("Poisson routes disagree: relative discrepancy {discrepancy:.3e} > {tolerance:.3e}")]
    RouteInconsistency { discrepancy: f64, tolerance: f64 },

    #[error("no root of the smallness function: c = {c} is too large (largest admissible c ~ {c_max:.6e})")]
    NoRoot { c: f64, c_max: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("iterate {iteration} left the gradient ball: {norm:.6e} > {bound:.6e}")]
    BallEscape { iteration: usize, norm: f64, bound: f64 },

    #[error("level parameter t = {t} must satisfy 0 < t < {t0}")]
    LevelOutOfRange { t: f64, t0: f64 },

    #[error("t schedule must be strictly decreasing and positive")]
    BadSchedule,

    #[error("boundary sequence diverges: Cauchy differences increased twice in a row at level {0}")]
    DivergingSequence(usize),

    #[error("problem does not satisfy the experiment preconditions: {0}")]
    Precondition(String),

    #[error("spec error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
