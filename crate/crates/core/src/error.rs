use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NonPrimeModulus(u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("operation requires a torus complex")]
    NotATorus,
    #[error("operation requires a cubical complex with geometry")]
    NotCubical,
    #[error("cell is not part of the complex: {0}")]
    UnknownCell(String),
    #[error("state space too large: {states} states exceeds the limit of {limit}")]
    TooLarge { states: u128, limit: u128 },
    #[error("search budget of {budget} subsets exhausted")]
    BudgetExceeded { budget: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),
    #[error("loop of side {n} does not fit: {reason}")]
    DoesNotFit { n: usize, reason: String },
    #[error("degenerate denominator: mean {mean} with standard error {std_err}")]
    DegenerateDenominator { mean: f64, std_err: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
