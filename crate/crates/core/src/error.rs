//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Rejection sampling could not produce a valid architecture.
    #[error("space too constrained: no valid architecture after {attempts} attempts")]
    SpaceTooConstrained { attempts: usize },

    /// Mutation could not produce a valid (and, where required, known) child.
    #[error("mutation exhausted: no acceptable child after {attempts} attempts")]
    MutationExhausted { attempts: usize },

    /// Path enumeration exceeded the configured cap.
    #[error("path explosion: {count} paths exceeds cap {cap}")]
    PathExplosion { count: usize, cap: usize },

    /// An architecture violates a structural invariant.
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    /// Two architectures come from different spaces.
    #[error("space mismatch: {left} vs {right}")]
    SpaceMismatch { left: String, right: String },

    /// Unknown operation label.
    #[error("unknown operation label {0:?}")]
    UnknownLabel(String),

    /// Numeric failure inside the differentiable core.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A projection or center collapsed to the zero vector.
    #[error("zero-norm embedding")]
    ZeroNormEmbedding,

    /// A contrastive batch where every pairwise distance is zero.
    #[error("degenerate batch: all pairwise GEDs are zero; dedupe the dataset first")]
    DegenerateBatch,

    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Checkpoint or table format problem.
    #[error("format error: {0}")]
    Format(String),

    /// Malformed benchmark line.
    #[error("malformed record at line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    /// Queried architecture is not in the benchmark table.
    #[error("architecture not in benchmark")]
    UnknownArchitecture,

    /// Rank correlation is undefined (all values tied on one side).
    #[error("undefined correlation: all values equal on one side")]
    UndefinedCorrelation,

    /// Mismatched lengths for paired statistics.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// Empty input where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Checkpoint parameters do not match the target model.
    #[error("weight transfer failed: {0}")]
    WeightTransfer(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
