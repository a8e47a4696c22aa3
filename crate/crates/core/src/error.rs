//! Error types shared across the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All domain errors surfaced by the library.
///
/// Variants are grouped loosely by the subsystem that raises them; the CLI
/// maps every variant except `Io` onto exit code 2 (usage / precondition).
#[derive(Debug)]
pub enum Error {
    /// Shapes or dimensions are inconsistent (patch grid vs. image, vector
    /// lengths, matrix sizes).
    DimensionMismatch { expected: String, actual: String },
    /// A batch operation received no images.
    EmptyBatch,
    /// Images in one batch do not share height/width/channels.
    HeterogeneousBatch { first: String, offending: String },
    /// Recomposition asked for more patches than the pool holds.
    PoolExhausted { requested: usize, available: usize },
    /// Normalization of a zero-norm vector.
    ZeroVector,
    /// Prototype of an empty negative set.
    EmptyNegatives,
    /// Corruption severity must be strictly positive.
    NonPositiveSeverity(f64),
    /// Correlation must lie in [0, 1).
    CorrelationOutOfRange(f64),
    /// Classifier direction must have unit L2 norm.
    NotUnitVector(f64),
    /// Correlation matrix must be symmetric.
    AsymmetricMatrix,
    /// Monte Carlo estimates need a minimum sample budget.
    TooFewSamples { requested: usize, minimum: usize },
    /// World specification failed validation.
    InvalidSpec(String),
    /// Stream sampling referenced a domain the world does not define.
    UnknownDomain(String),
    /// Adaptation over an empty stream.
    EmptyStream,
    /// Logits contained NaN or infinity.
    NonFiniteLogits,
    /// Metrics over an empty input.
    EmptyInput,
    /// A class label is outside [0, C).
    LabelOutOfRange { label: usize, num_classes: usize },
    /// Malformed TNS1 / PPM / JSON payload.
    Parse(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, actual } => {
                write!(f, "dimension mismatch: expected {expected}, got {actual}")
            }
            Error::EmptyBatch => write!(f, "batch is empty"),
            Error::HeterogeneousBatch { first, offending } => write!(
                f,
                "images in batch have differing shapes: {first} vs {offending}"
            ),
            Error::PoolExhausted {
                requested,
                available,
            } => write!(
                f,
                "patch pool exhausted: need {requested} patches, pool holds {available}"
            ),
            Error::ZeroVector => write!(f, "cannot normalize a zero vector"),
            Error::EmptyNegatives => write!(f, "prototype of zero negative embeddings"),
            Error::NonPositiveSeverity(s) => {
                write!(f, "corruption severity must be > 0, got {s}")
            }
            Error::CorrelationOutOfRange(r) => {
                write!(f, "correlation must lie in [0, 1), got {r}")
            }
            Error::NotUnitVector(norm) => {
                write!(f, "classifier direction must be unit norm, got norm {norm}")
            }
            Error::AsymmetricMatrix => write!(f, "correlation matrix is not symmetric"),
            Error::TooFewSamples { requested, minimum } => write!(
                f,
                "Monte Carlo needs at least {minimum} samples, got {requested}"
            ),
            Error::InvalidSpec(msg) => write!(f, "invalid world spec: {msg}"),
            Error::UnknownDomain(d) => write!(f, "unknown corruption domain '{d}'"),
            Error::EmptyStream => write!(f, "test stream is empty"),
            Error::NonFiniteLogits => write!(f, "logits contain NaN or infinite values"),
            Error::EmptyInput => write!(f, "input is empty"),
            Error::LabelOutOfRange { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
