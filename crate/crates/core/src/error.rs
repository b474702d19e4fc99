use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no parameter values")]
    NoParameterValues,

    #[error("ragged evidence paths: path of length {len} cannot cover horizon {horizon}")]
    RaggedPaths { len: usize, horizon: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid observation {value}: {reason}")]
    InvalidObservation { value: String, reason: &'static str },

    #[error("invalid evidence path: {0}")]
    InvalidPath(String),

    #[error("invalid theta grid: {0}")]
    InvalidGrid(String),

    #[error("randomization value {0} is outside [0, 1]")]
    TauOutOfRange(f64),

    #[error("p-value {0} is outside [0, 1]")]
    PValueOutOfRange(f64),

    #[error("model {model} cannot process {data} observations")]
    ModelMismatch {
        model: &'static str,
        data: &'static str,
    },

    #[error("invalid changepoint alternative: {0}")]
    InvalidAlternative(String),

    #[error("step {step} is outside 1..={horizon}")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("data length {got} does not match horizon {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("batch benchmark precondition violated: K={total}, k1={post}")]
    BatchPrecondition { total: usize, post: usize },

    #[error("exhaustive horizon exceeded: {horizon} > {max}")]
    HorizonExceeded { horizon: usize, max: usize },

    #[error("finals table has {got} entries, expected 2^{horizon}")]
    FinalsTableSize { horizon: usize, got: usize },

    #[error("invalid value {value} for {what}")]
    InvalidValue { what: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical assertion failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
