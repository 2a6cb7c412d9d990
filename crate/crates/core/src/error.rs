use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({0}, {1}, {2}) lies outside the bounding box")]
    OutsideBox(f64, f64, f64),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("map violates orientation: sampled det J reached {min_det:.6e}")]
    OrientationViolation { min_det: f64 },

    #[error("assembly failed at node {node:?}: {reason}")]
    Assembly { node: [usize; 3], reason: String },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNonConvergence { iterations: usize, residual: f64 },

    #[error("newton iteration failed: {reason}; residual history {history:?}")]
    NewtonFailure { reason: String, history: Vec<f64> },

    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sparse grid store is missing a value for knot {0}")]
    IncompleteStore(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("no valid atoms found in charge input")]
    EmptyCharges,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
