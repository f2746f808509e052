use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid floral arrangement: {0}")]
    Arrangement(String),
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("domain not admissible: {0}")]
    NotAdmissible(String),
    #[error("configuration does not match domain: {0}")]
    Configuration(String),
    #[error("event has zero probability: {0}")]
    ZeroProbability(String),
    #[error("exploration left the domain at {0}")]
    WalkedOff(String),
    #[error("exploration already finished")]
    Finished,
    #[error("invalid crossing spec: {0}")]
    Spec(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("degenerate curve: {0}")]
    Degenerate(String),
    #[error("too few samples: need {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("too large: {0}")]
    TooLarge(String),
    #[error("inequality violated: {0}")]
    Violation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
