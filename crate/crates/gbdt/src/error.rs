use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GbdtError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("empty training matrix")]
    EmptyMatrix,

    #[error("matrix shape mismatch: {0}")]
    Shape(String),

    #[error("{labels} labels for {rows} rows")]
    LabelCount { labels: usize, rows: usize },

    #[error("row has {got} features, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("schema fingerprint mismatch: model {model}, input {input}")]
    FingerprintMismatch { model: String, input: String },

    #[error("bin index {bin} out of range for feature with {bins} bins")]
    BinOutOfRange { bin: usize, bins: usize },

    #[error("malformed model document: {0}")]
    Format(String),
}
