use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at time {time}")]
    NonFinite { time: usize },

    #[error("response value required for the residual detector")]
    MissingResponse,

    #[error("insufficient training data: need {needed} observations, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("degenerate long-run variance")]
    DegenerateLongRunVariance,

    #[error("degenerate target-return constraint")]
    DegenerateConstraint,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance not in the uniformity class: {0}")]
    Membership(String),

    #[error("quadrature failed: drift function returned {value} at s = {at}")]
    Quadrature { at: f64, value: f64 },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("model has bias terms; the Lipschitz bound applies to bias-free networks")]
    HasBiases,

    #[error("activation {0} is not admissible here")]
    Activation(String),

    #[error("at time {time}: {source}")]
    AtTime {
        time: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at(self, time: usize) -> Self {
        Error::AtTime {
            time,
            source: Box::new(self),
        }
    }

    /// True for errors that come from the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            Error::AtTime { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
