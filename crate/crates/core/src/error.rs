use thiserror::Error;

/// Errors raised by the simulation and analysis modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    BadInput(String),

    #[error("shock meeting times disagree: {0}")]
    InconsistentMeeting(String),

    #[error("a single-shock profile needs an explicit meeting time hint")]
    MissingHint,

    #[error("window {window:?} does not contain tagged site {site}")]
    WindowTooSmall { site: i64, window: (i64, i64) },

    #[error("tagged sites for labels {a} and {b} coincide at {site}; epsilon too large")]
    TaggedCollision { a: usize, b: usize, site: i64 },

    #[error("tracked position {position} reached the window margin {window:?} at time {time}")]
    BoundaryReached {
        position: i64,
        window: (i64, i64),
        time: f64,
    },

    #[error("predictor range [{lo}, {hi}] leaves the window {window:?}")]
    RangeOutOfWindow {
        lo: i64,
        hi: i64,
        window: (i64, i64),
    },

    #[error("segment length {0} exceeds the exact-solver limit of 6 sites")]
    TooLarge(usize),

    #[error("time choice {t} does not order the pulled-back fronts")]
    OrderingFailed { t: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("ensemble capture does not cover sites [{lo}, {hi}] (captured radius {radius})")]
    ObservableMissing { lo: i64, hi: i64, radius: i64 },

    #[error("test function support [{lo}, {hi}] exceeds the captured window at epsilon={epsilon}")]
    SupportTooWide { lo: f64, hi: f64, epsilon: f64 },

    #[error("too many invalid replicas: {invalid} of {total}")]
    TooManyInvalid { invalid: usize, total: usize },

    #[error("cannot merge ensembles: {0}")]
    MergeMismatch(String),

    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
