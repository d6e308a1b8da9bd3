use thiserror::Error;

/// Broad classification used by front ends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, shapes or configuration.
    Validation,
    /// Missing or malformed data on disk.
    Data,
    /// Singular systems, divergence, degenerate statistics.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("trajectory too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("singular regression: {0}")]
    Singular(String),

    #[error("segmentation failed: {0}")]
    Segmentation(String),

    #[error("target has zero variance")]
    ZeroVariance,

    #[error("training diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("demonstration id {0} is not present in the dataset")]
    UnknownDemo(usize),

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::TooShort { .. }
            | Error::UnknownDemo(_) => ErrorKind::Validation,
            Error::Singular(_) | Error::ZeroVariance | Error::Divergence { .. } => {
                ErrorKind::Numerical
            }
            Error::Fold { source, .. } => source.kind(),
            Error::Segmentation(_)
            | Error::MissingData(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
