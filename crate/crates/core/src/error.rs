use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid interval: a ≥ b ({a} ≥ {b})")]
    DegenerateInterval { a: f64, b: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("x = {x} lies outside the interval [{a}, {b}]")]
    OutsideInterval { x: f64, a: f64, b: f64 },

    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("contour radius {radius:e} too small to separate the group")]
    ContourTooSmall { radius: f64 },

    #[error("resolvent solve failed at node {node}: contour passes through the spectrum")]
    ResolventSingular { node: usize },

    #[error("group not isolated at x = {x}: {reason}")]
    NotIsolated { x: f64, reason: String },

    #[error("trace vector not in projection range (defect {defect:e})")]
    TraceNotInRange { defect: f64 },

    #[error("inconsistent codimension data: {0}")]
    InconsistentCodimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("residual {residual:e} above threshold {threshold:e}: boundary conditions not admissible or grid too coarse")]
    ResidualTooLarge { residual: f64, threshold: f64 },

    #[error("kernel dimension inconclusive: counts {counts:?} across refinements")]
    InconclusiveKernel { counts: Vec<usize> },

    #[error("non-monotone errors across refinements: {errors:?}")]
    NonMonotoneErrors { errors: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
