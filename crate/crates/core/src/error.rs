use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("duplicate attribute name `{0}`")]
    DuplicateAttribute(String),
    #[error("attribute `{0}` has invalid bounds")]
    InvalidBounds(String),
    #[error("categorical attribute `{0}` needs at least two values")]
    CategoricalTooSmall(String),
    #[error("unknown encoding variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("value for attribute `{0}` does not conform to its kind")]
    TypeMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite number in {0}")]
    NonFinite(String),
    #[error("attribute `{0}` is continuous; domain is not enumerable")]
    NotEnumerable(String),
    #[error("enumeration exceeded the limit of {0} configurations")]
    EnumerationLimit(u64),
    #[error("feature divisor for `{0}` must be positive and finite")]
    InvalidScale(String),
    #[error("scale entry `{0}` does not name a feature")]
    UnknownFeature(String),
    #[error("invalid instance: {0}")]
    Instance(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("enumeration exceeded the limit of {0} tuples")]
    EnumerationLimit(u64),
    #[error("variable `{0}` must have finite bounds")]
    UnboundedIntegerVariable(String),
    #[error("constraint or objective references variable index {0} which does not exist")]
    UnknownVariable(usize),
    #[error("solver backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("simplex lost feasibility to round-off")]
    Numerical,
    #[error("external backend failed: {0}")]
    External(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("query size k must be at least 2, got {0}")]
    InvalidSetSize(usize),
    #[error("gamma must lie in [0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("iteration index must be at least 1")]
    InvalidIteration,
    #[error("fewer than {k} feature-distinct feasible configurations exist")]
    DomainTooSmall { k: usize, available: Option<usize> },
    #[error("the context leaves no feasible configuration")]
    InfeasibleContext,
    #[error("the problem is unbounded")]
    Unbounded,
    #[error("solver time budget expired before any feasible query set was found")]
    CutoffWithoutIncumbent,
    #[error("strategy requires an enumerable domain")]
    RequiresEnumeration,
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElicitError {
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("chosen index {index} out of range for a query of size {k}")]
    InvalidChoice { index: usize, k: usize },
    #[error("user channel timed out; session suspended")]
    Suspended,
    #[error("user channel closed: {0}")]
    ChannelClosed(String),
    #[error("session already finished")]
    Finished,
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl From<SolverError> for ElicitError {
    fn from(e: SolverError) -> Self {
        ElicitError::Query(QueryError::Solver(e))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("alpha must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("step size must be positive, got {0}")]
    NonPositiveEta(f64),
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("negative radicand {0} in the regret bound")]
    NegativeRadicand(f64),
    #[error("empty trace")]
    EmptyTrace,
    #[error("trace row {0} carries no regret")]
    MissingRegret(usize),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid weight distribution: {0}")]
    InvalidDistribution(String),
    #[error("population size must be at least 1")]
    EmptyPopulation,
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
}
