use thiserror::Error;

/// Errors raised across curve construction.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),
    #[error("derivatives are not available for the {0} family")]
    UnsupportedDerivative(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance matrix is not positive definite")]
    SingularCovariance,
    #[error("constraint matrix is singular")]
    SingularConstraintMatrix,
    #[error("constraint matrix is rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },
    #[error("invalid market-fit system: {0}")]
    InvalidSystem(String),
    #[error("point {0} lies outside the model domain")]
    OutOfDomain(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid quote: {0}")]
    InvalidQuote(String),
    #[error("no curve point at horizon {0}")]
    MissingCurvePoint(f64),
    #[error("no discount factor available at horizon {0}")]
    MissingDiscount(f64),
    #[error("inconsistent payment grid: {0}")]
    InconsistentGrid(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("iteration limit reached after {0} iterations")]
    MaxIterations(usize),
    #[error("acceptance rate {rate:.3e} fell below {floor:.1e}")]
    AcceptanceTooLow { rate: f64, floor: f64 },
    #[error("leave-one-out fold {fold} is infeasible")]
    InfeasibleFold { fold: usize },
    #[error("no sign change of the variance equation in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("at least {needed} samples are required, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("curve value {0} is not positive")]
    NonPositiveValue(f64),
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),
    #[error("{0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
