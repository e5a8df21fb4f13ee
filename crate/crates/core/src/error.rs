use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Sizing(String),
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("support violation: {0}")]
    Support(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("empty filter bank for lambda range [{0}, {1}]")]
    EmptyBank(f64, f64),
    #[error("derivative order {requested} exceeds bank order {available}")]
    BankOrder { requested: usize, available: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("missing moment C_{0}")]
    MissingMoment(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
