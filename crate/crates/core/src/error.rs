use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in component {component} at x = {point:?}")]
    NonFinite { component: usize, point: Vec<f64> },

    #[error("non-finite coordinate {index} in point {point:?}")]
    NonFiniteCoordinate { index: usize, point: Vec<f64> },

    #[error("point {point:?} is off the unit sphere (||x| - 1| = {deviation:e})")]
    OffSphere { point: Vec<f64>, deviation: f64 },

    #[error("homogeneous extension f(x/|x|) is undefined at the origin")]
    Origin,

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("expression parse error: {0}")]
    Parse(String),

    #[error("parameter constraint violated: {0}")]
    Constraint(String),

    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("non-finite integrand value at node {point:?}")]
    NonFiniteIntegrand { point: Vec<f64> },

    #[error(
        "|f(x)| = {amplitude:e} is below the amplitude threshold {threshold:e}; \
         use the amplitude-split form"
    )]
    SmallAmplitude { amplitude: f64, threshold: f64 },

    #[error("unsupported codomain: {0}")]
    Codomain(String),

    #[error("search aborted: {0}")]
    Search(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
