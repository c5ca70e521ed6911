use thiserror::Error;

/// Errors surfaced by the simulators and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("event {event} is not enabled in the current state")]
    DisabledEvent { event: String },

    #[error("window underflow at t={time}: no particle can move (boundary_events={boundary_events})")]
    WindowUnderflow { time: f64, boundary_events: u64 },

    #[error("insufficient window to locate x1: the tracked window has no empty site")]
    NoEmptySite,

    #[error("inconsistent front triple: front {front} - counter {counter} != zfront {zfront}")]
    InconsistentFront { front: i64, counter: i64, zfront: i64 },

    #[error("requested width {width} exceeds window {window}")]
    WidthTooLarge { width: usize, window: usize },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("coupling violated at t={time}: {detail}")]
    CouplingViolation { time: f64, detail: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
