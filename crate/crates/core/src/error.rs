use thiserror::Error;

use crate::beam::BeamState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape-function order {requested} is not supported (maximum {max})")]
    UnsupportedOrder { requested: usize, max: usize },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("axial coupling did not converge in {iterations} iterations (last |dN| = {residual:e} N)")]
    Convergence {
        iterations: usize,
        residual: f64,
        last: Box<BeamState>,
    },

    #[error("time integration produced non-finite values at t = {time} s; reduce dt or add damping")]
    Divergence { time: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error("every deflection degree of freedom is constrained")]
    FullyConstrained,

    #[error("command rejected: {0}")]
    Rejected(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("recording format version {found} is incompatible with supported version {expected}")]
    IncompatibleVersion { found: u32, expected: u32 },

    #[error("recording is truncated: {0}")]
    Truncated(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
