use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported spin quantum number {0} (expected 1/2 or 1)")]
    UnsupportedSpin(f64),

    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (max deviation {0:e})")]
    NotUnitary(f64),

    #[error("{name} tensor is not symmetric (max deviation {deviation:e})")]
    NotSymmetric { name: &'static str, deviation: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("level labeling is ambiguous: eigenstate {index} has dominant character {weight:.3} < {threshold}")]
    AmbiguousLabel {
        index: usize,
        weight: f64,
        threshold: f64,
    },

    #[error("missing level label for {0}")]
    MissingLabel(&'static str),

    #[error("field calibration failed: {0}")]
    Calibration(String),

    #[error("unknown transition `{0}`")]
    UnknownTransition(String),

    #[error("no transition within {tolerance} MHz of carrier {frequency} MHz")]
    UnresolvedCarrier { frequency: f64, tolerance: f64 },

    #[error("channel mismatch: {channel} cannot drive transition {transition}")]
    ChannelMismatch {
        channel: &'static str,
        transition: &'static str,
    },

    #[error("negative duration {0} us")]
    NegativeDuration(f64),

    #[error("unrealizable pulse: {0}")]
    UnrealizablePulse(String),

    #[error("density matrix invariant violated: {0}")]
    InvalidState(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("singular normalization: reference intensity {0:e} is zero")]
    SingularNormalization(f64),

    #[error("no conversion path for level pair ({0}, {1})")]
    NoConversionPath(usize, usize),

    #[error("coherence correction factor {0:.4} below reliability threshold 0.1")]
    UnreliableCorrection(f64),

    #[error("incomplete tomography record: {0}")]
    IncompleteRecord(String),

    #[error("sequence program invalid: {0}")]
    Sequence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
