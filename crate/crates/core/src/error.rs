use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit exceeded: {what} ({count} > {cap})")]
    ResourceLimit {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("element is not hyperbolic: |trace| = {trace_abs} <= 2")]
    NonHyperbolic { trace_abs: f64 },

    #[error("fundamental-domain reduction did not terminate after {steps} steps (malformed group?)")]
    ReductionDiverged { steps: usize },

    #[error("seed was annihilated by the series: max |f| = {max_abs:e}")]
    DegenerateSeed { max_abs: f64 },

    #[error("mesh generation failed: {0}")]
    Mesh(String),

    #[error("Newton iteration did not converge at t = {t}: residual {residual:e} after {iterations} iterations")]
    NonConvergence {
        t: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("linear system is singular or indefinite: {0}")]
    SingularSystem(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("exclusion disks remove every vertex")]
    EmptyDomain,

    #[error("t grid spans {decades:.2} decades, need at least {required}")]
    InsufficientRange { decades: f64, required: f64 },

    #[error("function is not mean-zero: mean = {mean:e}")]
    NotMeanZero { mean: f64 },

    #[error("point {re} + {im}i lies outside the mesh")]
    OutsideMesh { re: f64, im: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
