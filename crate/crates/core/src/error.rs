use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite entry")]
    NonFinite,

    #[error("no common implementing element: residual {residual:.3e} (relative {relative:.3e}) exceeds tolerance {tolerance:.3e}")]
    NoCommonImplementingElement { residual: f64, relative: f64, tolerance: f64 },

    #[error("no global implementing element: relative residual {relative:.3e} exceeds tolerance {tolerance:.3e}")]
    NoGlobalImplementingElement { relative: f64, tolerance: f64 },

    #[error("incomplete probes: {0}")]
    IncompleteProbes(String),

    #[error("unsupported generator for shape: {0}")]
    UnsupportedGenerator(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed document: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
