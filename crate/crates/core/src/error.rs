use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample has {got} channels, configuration expects {expected}")]
    ChannelCountMismatch { expected: usize, got: usize },

    #[error("timestamp {t} precedes previous sample at {prev}")]
    NonMonotoneTimestamp { prev: f64, t: f64 },

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("band {name} [{lo_hz}, {hi_hz}] Hz lies outside [0, {nyquist_hz}] Hz")]
    BandOutOfRange {
        name: String,
        lo_hz: f64,
        hi_hz: f64,
        nyquist_hz: f64,
    },

    #[error("frontal channel `{0}` has no band powers")]
    MissingFrontalChannel(String),

    #[error("alpha + theta power below 1e-12 uV^2; signal is dead")]
    DegenerateDenominator,

    #[error("calibration phase has no TEI points after the transient")]
    EmptyPhase,

    #[error("every TEI point in the calibration phase was artifact-flagged")]
    AllFlagged,

    #[error("calibration invalid: low threshold {low} is not below high threshold {high} by the required margin")]
    CalibrationInvalid { low: f64, high: f64 },

    #[error("TEI series is empty")]
    EmptySeries,

    #[error("statistical group is empty")]
    EmptyGroup,

    #[error("pooled variance is zero")]
    DegenerateVariance,

    #[error("mismatched subjects: {0}")]
    MismatchedSubjects(String),

    #[error("band {name} upper edge {hi_hz} Hz exceeds Nyquist {nyquist_hz} Hz")]
    NyquistViolation {
        name: String,
        hi_hz: f64,
        nyquist_hz: f64,
    },

    #[error("sample source ended before the session plan completed")]
    SourceExhausted,

    #[error("I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),

    #[error("recording header `{found}` does not match configured channels `{expected}`")]
    HeaderMismatch { expected: String, found: String },

    #[error("recording is empty")]
    EmptyRecording,

    #[error("malformed recording row {row}: {reason}")]
    MalformedRecording { row: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed session log: {0}")]
    MalformedLog(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::IoFailure(io),
            other => Error::MalformedRecording {
                row: 0,
                reason: format!("{other:?}"),
            },
        }
    }
}
