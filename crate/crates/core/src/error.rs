use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("generation slot {slot} lies outside frame [{start}, {end})")]
    GenerationOutsideFrame { slot: u64, start: u64, end: u64 },

    #[error("frame length must be at least 1")]
    EmptyFrame,

    #[error("node count {n} is smaller than histogram total {total}")]
    NodeCountTooSmall { n: u64, total: u64 },

    #[error("no backlog: every node has zero age-gain")]
    NoBacklog,

    #[error("observation counts ({singleton}, {empty}, {collision}) do not sum to frame length {frame_len}")]
    InconsistentObservation {
        singleton: u64,
        empty: u64,
        collision: u64,
        frame_len: u64,
    },

    #[error("candidate count {l} is below the number of successes {successes}")]
    TooFewCandidates { l: u64, successes: u64 },

    #[error(
        "estimated count {estimated} for gain {gain} is below its {observed} observed successes"
    )]
    AllocationBelowObserved {
        gain: u64,
        estimated: u64,
        observed: u64,
    },

    #[error("no successful slots to allocate")]
    NoSuccesses,

    #[error("generation probability {0} must be in (0, 1]")]
    InvalidLambda(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
