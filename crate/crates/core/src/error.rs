use thiserror::Error;

/// Errors raised by cost evaluation, geometry, condition checks and the
/// transport solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point outside the cost domain or inside its excluded set: {0}")]
    Domain(String),

    #[error("derivative order {order} exceeds the supported maximum of 4")]
    Order { order: usize },

    #[error("finite-difference stencil too close to the excluded set: {0}")]
    SingularStencil(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("zero tangent vector")]
    ZeroVector,

    #[error("trajectory left the domain at t = {time}")]
    DomainExit { time: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("source and target masses differ: {plus} vs {minus}")]
    InfeasibleMass { plus: f64, minus: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("plan is not optimal: {0}")]
    NotOptimal(String),

    #[error("exact cycle enumeration exceeded the node budget of {budget}")]
    ComplexityGuard { budget: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
