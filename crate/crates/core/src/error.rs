use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing value in column '{column}' at row {row}")]
    MissingCell { row: usize, column: String },

    #[error("timestamps are not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },

    #[error("series length mismatch: {0}")]
    LengthMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("undefined coefficient of determination: {0}")]
    ZeroVariance(String),

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { symbol: u32, alphabet: u32 },

    #[error("hyper-node alphabet of size {size} exceeds cap {cap}; exclude nodes or reduce the number of levels")]
    HyperNodeTooLarge { size: u128, cap: u128 },

    #[error("unknown node id '{0}'")]
    UnknownNode(String),

    #[error("internal consistency violation: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
