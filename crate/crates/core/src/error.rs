use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("all relevance scores are zero")]
    AllZero,
    #[error("negative score {value} for individual {id}")]
    NegativeScore { id: String, value: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("queries rank different individual sets: {0}")]
    Coverage(String),
    #[error("timesteps must be strictly increasing: {prev} then {next}")]
    StreamOrder { prev: u64, next: u64 },
    #[error("scope contains no individuals")]
    EmptyScope,
    #[error("no assignment satisfies the constraints")]
    Infeasible,
    #[error("instance of size {size} exceeds the limit of {max}")]
    TooLarge { size: usize, max: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("relative-deviation mode requires unit polarities")]
    ModeMismatch,
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
