use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty configuration: no nuclei left after barrier exclusion")]
    EmptyConfiguration,

    #[error("coincident positions at index pair ({0}, {1})")]
    CoincidentPositions(usize, usize),

    #[error("dimension {dim} exceeds the configured cap {cap} ({detail})")]
    DimensionCap { dim: usize, cap: usize, detail: String },

    #[error("kick angle {0} rad is at or beyond pi/2; rate diverges")]
    InfiniteRate(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
