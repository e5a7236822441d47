use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("{0}")]
    Capability(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("schedule conflict on channel {channel} at sample {start}")]
    Overlap { channel: String, start: u64 },

    #[error("unknown channel {0}")]
    UnknownChannel(String),

    #[error("waveform sample magnitude {0} exceeds 1")]
    SampleOverflow(f64),

    #[error("trace drifted by {drift:e} at sample {sample}; reduce the integration step (raise substeps)")]
    IntegrationAccuracy { drift: f64, sample: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("readout mitigation failed: {0}")]
    Mitigation(String),

    #[error("optimizer aborted at iteration {iteration}: non-finite cost")]
    NonFiniteCost { iteration: usize },

    // the message already carries the inner error, so it is not exposed as a source
    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            inner: Box::new(self),
        }
    }
}
