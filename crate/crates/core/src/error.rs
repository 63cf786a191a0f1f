use num_complex::Complex64;
use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown form-factor family `{0}`")]
    UnknownFamily(String),

    #[error("analyticity region violated: {0}")]
    Analyticity(String),

    #[error("point {0} lies outside the analyticity region of the model")]
    Domain(Complex64),

    #[error("non-finite integrand value at node {index} (z = {z})")]
    NonFinite { index: usize, z: Complex64 },

    #[error("{method} did not converge after {iterations} iterations (last iterate {last}, residual {residual:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        last: Complex64,
        residual: f64,
    },

    #[error("pole {0} lies outside the strip between the real axis and the contour; re-deepen the contour and recompute")]
    PoleBelowContour(Complex64),

    #[error("found {0} zeros of the pole equation inside the strip, expected exactly one")]
    PoleCount(i64),

    #[error("degenerate pole: the derivative of the pole equation vanishes")]
    DegeneratePole,

    #[error("self-orthogonal pair: the left/right overlap vanishes (exceptional point)")]
    SelfOrthogonal,

    #[error("pairing of two singular components located at the same point {0} is a distribution, not a number")]
    CoincidentSingularities(Complex64),

    #[error("negative time t = {0} is not supported by the lower-contour decomposition")]
    NegativeTime(f64),

    #[error("no open decay channel: discrete level {level} lies below the continuum threshold {threshold}")]
    ClosedChannel { level: f64, threshold: f64 },

    #[error("invalid barrier specification: {0}")]
    Barrier(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("assembled matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("λ = {0} is within one node spacing of the contour; the quadrature sum is near-singular there")]
    NearContour(Complex64),

    #[error("point {0} is not a node of the contour grid")]
    NotANode(Complex64),
}

pub type Result<T> = std::result::Result<T, Error>;
