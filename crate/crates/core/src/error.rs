use thiserror::Error;

/// Errors raised by the waveform, channel, detection and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid length: expected {expected}, got {actual}")]
    InvalidLength { expected: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported constellation order {0} (must be a power of two >= 2)")]
    UnsupportedConstellation(usize),
    #[error("path delay {delay} does not fit a block of {n} samples")]
    InvalidDelay { delay: usize, n: usize },
    #[error("search space of {candidates} candidates exceeds the cap of {cap}")]
    SearchSpaceTooLarge { candidates: u128, cap: u128 },
    #[error("cannot compare labels of {left} and {right} bits")]
    InvalidComparison { left: usize, right: usize },
    #[error("PAPR is undefined for an all-zero signal")]
    UndefinedPapr,
    #[error("pairwise term needs two distinct candidates")]
    InvalidPair,
    #[error("no unambiguous chirp order exists: {0}")]
    DegenerateConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
