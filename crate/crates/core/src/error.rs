//! Crate-wide error type.
//!
//! Validation failures (bad parameters, mismatched systems) are kept separate
//! from numerical failures (solver stall, training divergence) so callers can
//! map them to different exit codes.

/// Errors produced by any module in this crate.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible range.
    #[error("parameter `{name}` = {value} is outside {expected}")]
    ParameterRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// Two objects refer to different mode systems (labels, cutoff or size).
    #[error("mode system mismatch: {0}")]
    SystemMismatch(String),

    /// A mode label does not exist in the target system.
    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    /// Matrix or vector dimensions are inconsistent.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A state failed validation (norm, hermiticity, trace or positivity).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A measurement effect produced an out-of-range probability.
    #[error("invalid effect: {0}")]
    InvalidEffect(String),

    /// The requested POVM variant does not support the requested noise model.
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    /// Outcome alphabets of two distributions or maps do not agree.
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    /// A probability is negative beyond the model-bug threshold.
    #[error("negative probability {value:.3e} for outcome `{outcome}`")]
    NegativeProbability { outcome: String, value: f64 },

    /// Distribution metadata does not match what the caller requires.
    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),

    /// The requested ring size exceeds the configured resource limit.
    #[error("ring size {n} exceeds the supported limit of {max} parties")]
    RingTooLarge { n: usize, max: usize },

    /// A feasibility problem is structurally malformed.
    #[error("malformed feasibility problem: {0}")]
    MalformedProblem(String),

    /// The simplex solver failed to terminate within its iteration budget.
    #[error("solver stalled: {0}")]
    SolverStalled(String),

    /// A produced certificate failed independent verification.
    #[error("certificate verification failed: {0}")]
    CertificateInvalid(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step} (loss = {loss})")]
    TrainingDiverged { step: usize, loss: f64 },

    /// Serialization or deserialization failed.
    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
