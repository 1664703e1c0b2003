use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative mass {value} at flat index {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("total mass is zero")]
    ZeroTotalMass,
    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid encoder: {0}")]
    InvalidEncoder(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("lambda {0} outside the required range")]
    InvalidLambda(f64),
    #[error("every cluster has -inf weight for x = {0}")]
    AllRowsDegenerate(usize),
    #[error("grid of {points} encoders exceeds the enumeration budget {budget}")]
    InstanceTooLarge { points: u128, budget: u128 },
    #[error("side information is not a deterministic function of the label")]
    NotDeterministicSideInfo,
    #[error("class {0} has no training documents")]
    EmptyClass(usize),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
