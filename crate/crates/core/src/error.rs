use serde::Serialize;
use thiserror::Error;

/// Why a matrix failed primitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Imprimitivity {
    /// The induced digraph is not strongly connected.
    Reducible,
    /// Strongly connected, but every cycle length is a multiple of `period`.
    Periodic { period: usize },
}

impl std::fmt::Display for Imprimitivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Imprimitivity::Reducible => write!(f, "reducible (not strongly connected)"),
            Imprimitivity::Periodic { period } => write!(f, "periodic with period {period}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("negative entries: {entries:?}")]
    NegativeEntry { entries: Vec<(usize, usize, f64)> },
    #[error("row sums deviate from 1: {rows:?}")]
    RowSumViolation {
        /// `(row, sum - 1)` for every offending row.
        rows: Vec<(usize, f64)>,
    },
    #[error("matrix is not primitive: {reason}")]
    NotPrimitive { reason: Imprimitivity },
    #[error("iterative solve did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("dimension {n} exceeds the configured limit: {detail}")]
    DimensionTooLarge { n: usize, detail: String },
    #[error("invalid dimension {n}: {detail}")]
    InvalidDimension { n: usize, detail: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("edge list is not symmetric: ({0}, {1}) has no reverse")]
    AsymmetricEdgeList(usize, usize),
    #[error("node {0} has zero degree")]
    ZeroDegreeNode(usize),
    #[error("edge ({0}, {1}) references a node outside the graph")]
    EdgeOutOfRange(usize, usize),
    #[error("no connected sample after {retries} retries")]
    RetriesExhausted { retries: usize },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("projected network is not stable: spectral radius {spectral_radius}")]
    NotStable { spectral_radius: f64 },
    #[error("eigenvalue computation failed")]
    EigenSolveFailure,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("matrix does not carry flocking structure")]
    NotFlocking,
    #[error("solve cancelled")]
    Cancelled,
    #[error("bracket for t(eps) not found below 2^{max_doublings}")]
    HorizonExceeded { max_doublings: usize },
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("all rows are identical (Var0 = {var0:e})")]
    ConsensusAlreadyReached { var0: f64 },
    #[error("value at index {index} is not positive: {value}")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("at least {required} points required, got {found}")]
    TooFewPoints { required: usize, found: usize },
    #[error("grid must be strictly increasing")]
    UnsortedGrid,
    #[error("parse error on line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
