use thiserror::Error;

pub type Result<T, E = CeError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CeError {
    #[error("need at least 2 candidates, got {0}")]
    TooFewCandidates(usize),

    #[error("candidate {index} has an empty model id")]
    EmptyModelId { index: usize },

    #[error("duplicate model id `{0}` within one sample")]
    DuplicateModelId(String),

    #[error("candidate `{0}` has no embedding (required by the cosine metric)")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector has no direction")]
    ZeroNorm,

    #[error("{name} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("grid side must be >= 2, got {0}")]
    GridTooSmall(usize),

    #[error("pivot {pivot} out of range for {n} candidates")]
    InvalidPivot { pivot: usize, n: usize },

    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid divergence matrix: {0}")]
    InvalidMatrix(String),

    #[error("prompt template is missing the `{{{0}}}` placeholder")]
    MissingPlaceholder(&'static str),

    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },

    #[error("estimator {0} requires candidate embeddings")]
    EstimatorNeedsEmbeddings(&'static str),
}
