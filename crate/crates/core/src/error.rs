use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("zero-norm axis on joint {joint}")]
    ZeroNormAxis { joint: usize },
    #[error("joint {joint} has invalid limits: lower {lower} must be below upper {upper}")]
    InvalidLimits { joint: usize, lower: f64, upper: f64 },
    #[error("duplicate attachment name `{0}`")]
    DuplicateAttachment(String),
    #[error("attachment `{name}` refers to body {body}, chain has {bodies} bodies")]
    InvalidBody {
        name: String,
        body: usize,
        bodies: usize,
    },
    #[error("unknown attachment `{0}`")]
    UnknownAttachment(String),
    #[error("state has {got} entries, chain has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("component `{component}` produced a non-finite value")]
    NonFiniteComponent { component: String },
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("kalman filter diverged: covariance is no longer positive semidefinite")]
    FilterDiverged,
    #[error("plant state became non-finite at joint {joint}")]
    PlantDiverged { joint: usize },
    #[error("points are collinear")]
    CollinearPoints,
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("trajectory log needs at least 2 ticks, got {0}")]
    LogTooShort(usize),
    #[error("empty group `{0}`")]
    EmptyGroup(String),
    #[error("rejection sampling exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error("tick {tick}: {source}")]
    AtTick {
        tick: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
