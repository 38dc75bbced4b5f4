use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("keep mask must select at least one bit")]
    EmptyKeepMask,

    #[error("invalid extractor geometry: {0}")]
    InvalidParams(String),

    #[error("seed source exhausted at block {block}")]
    SeedExhausted { block: u64 },

    #[error("entropy budget too small for security bound (n*h - 2*log2(1/eps) = {value:.3})")]
    EntropyBudgetTooSmall { value: f64 },

    #[error("extractor output m = {m} exceeds leftover-hash budget {max}")]
    BudgetExceeded { m: usize, max: usize },

    #[error("input too short: need at least {needed}, got {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Io {
        stage: &'static str,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(stage: &'static str) -> impl FnOnce(io::Error) -> Error {
        move |source| Error::Io { stage, source }
    }
}
