use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sampling schedule produced {0} samples, at least 2 are required")]
    ScheduleTooShort(usize),

    #[error("Doppler bin {bin_hz} Hz exceeds the schedule's Nyquist bound of {nyquist_hz} Hz")]
    AboveNyquist { bin_hz: f64, nyquist_hz: f64 },

    #[error("degenerate covariance: observation slice is all zeros")]
    DegenerateCovariance,

    #[error("ill-conditioned covariance at Doppler bin {doppler_bin:?} (condition estimate {condition:.3e})")]
    IllConditioned {
        condition: f64,
        doppler_bin: Option<usize>,
    },

    #[error("profile of length {len} is too short for CFAR, need at least {min}")]
    ProfileTooShort { len: usize, min: usize },

    #[error("spatial refinement needs at least 2 antennas; bypass it for single-antenna input")]
    SingleAntenna,

    #[error("measured phase {0} is outside [-π, π]; wrap it first")]
    PhaseOutOfRange(f64),

    #[error("reflection angle {0} rad must lie in (0, π/2)")]
    BadAngle(f64),

    #[error("height series do not overlap in time")]
    NoOverlap,

    #[error("bad magic at byte offset {offset}: expected {expected:?}")]
    BadMagic { offset: u64, expected: &'static str },

    #[error("size mismatch: header declares {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("timestamp {index} at byte offset {offset} is not strictly increasing")]
    NonMonotoneTimestamps { index: usize, offset: u64 },

    #[error("header at byte offset {offset} declares zero {what}")]
    EmptyDimension { offset: u64, what: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
