use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("target has no gradient")]
    GradientUnavailable,

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("element {element} has {count} draws, at least {required} needed; explore it further or coarsen the partition")]
    TooFewDraws {
        element: usize,
        count: usize,
        required: usize,
    },

    #[error("unexplored element {element} has non-negligible weight {weight}")]
    UnexploredElement { element: usize, weight: f64 },

    #[error("all importance estimates are zero")]
    ZeroEstimates,

    #[error("chain {chain} failed: {source}")]
    Chain {
        chain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("constant series has undefined autocorrelation at lag {0}")]
    ConstantSeries(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
