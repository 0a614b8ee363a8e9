use thiserror::Error;

/// Reasons an instance file is rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("missing `p mcf` header")]
    MissingHeader,
    #[error("duplicate header")]
    DuplicateHeader,
    #[error("edge count mismatch: header says {expected}, found {found}")]
    EdgeCountMismatch { expected: usize, found: usize },
    #[error("commodity count mismatch: header says {expected}, found {found}")]
    CommodityCountMismatch { expected: usize, found: usize },
    #[error("vertex id {0} out of range")]
    VertexOutOfRange(usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("nonpositive capacity {0}")]
    NonpositiveCapacity(f64),
    #[error("nonpositive demand value {0}")]
    NonpositiveDemand(f64),
    #[error("commodity index {0} out of range")]
    CommodityIndex(usize),
    #[error("commodity {0} defined twice")]
    DuplicateCommodity(usize),
    #[error("commodity source equals sink")]
    SourceIsSink,
    #[error("graph is disconnected")]
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("block {edge} is not positive definite (lambda_min = {lambda_min:e})")]
    NotPositiveDefinite { edge: usize, lambda_min: f64 },
    #[error("right-hand side is not orthogonal to the constants (imbalance {0:e})")]
    Unbalanced(f64),
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("width never satisfied: no iteration was accepted")]
    WidthNeverSatisfied,
    #[error("size {needed} exceeds budget {budget}")]
    Budget { needed: usize, budget: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("all probes failed; last tried lambda = {0}")]
    AllProbesFailed(f64),
    #[error("linear program is unbounded")]
    Unbounded,
}

pub type Result<T> = std::result::Result<T, Error>;
