use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense tensor would have {entries} entries, above the cap of {cap}")]
    DenseCap { entries: u128, cap: usize },

    #[error("model normalization Z_T is zero (identically-zero model)")]
    ZeroNormalization,

    #[error("sample {index} has zero probability under the model")]
    ZeroProbability { index: usize },

    #[error("negative entry {value} found where a non-negative tensor is required")]
    NegativeEntry { value: f64 },

    #[error("sampling failed after {0} retries: zero-probability prefix")]
    SamplingFailed(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("malformed document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroNormalization
                | Error::ZeroProbability { .. }
                | Error::SamplingFailed(_)
                | Error::Numerical(_)
        )
    }
}
