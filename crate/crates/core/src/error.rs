use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("explicit step schedule exhausted: requested step {requested}, schedule has {available}")]
    ScheduleExhausted { requested: usize, available: usize },

    #[error("step schedule fails {condition}: {detail}")]
    ConditionFailed { condition: String, detail: String },

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("path window does not cover [{from}, {to}]; retained grid ends at {retained_end}")]
    InsufficientCoverage { from: f64, to: f64, retained_end: f64 },

    #[error("empirical accumulator has no emitted terms")]
    EmptyAccumulator,

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
