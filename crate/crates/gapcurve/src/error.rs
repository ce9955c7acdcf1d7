use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation (open curve, singular data, ...).
    #[error("{0}")]
    Domain(String),
    /// Malformed input file.
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    /// The grid does not resolve the request; a finer grid is needed.
    #[error("{0}; increase n")]
    Resolution(String),
    /// An iterative solver left its basin.
    #[error("{message} (last residual {residual:.3e})")]
    Divergence { message: String, residual: f64 },
    /// Eigenvector normalization w^t v vanished.
    #[error("eigenvector normalization degenerate (mu close to +-1); use delta_M route")]
    DegenerateEigen,
    /// A variation formula was requested at a multiple zero.
    #[error("zero lambda_{index} has multiplicity {mult}; variation undefined")]
    MultipleZero { index: i64, mult: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::DegenerateEigen | Error::MultipleZero { .. } => 1,
            Error::Parse { .. } | Error::Io(_) => 2,
            Error::Resolution(_) => 3,
            Error::Divergence { .. } => 4,
        }
    }
}
