use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A covariance matrix, symplectic matrix or map failed its physicality check.
    #[error("validity error: {0}")]
    Validity(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("basis error: {0}")]
    Basis(String),

    #[error("ill-conditioned inversion (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("no fixed point: {0}")]
    NoFixedPoint(String),

    #[error("numeric overflow at step {step}")]
    Overflow { step: usize },

    #[error("resource guard exceeded: {0}")]
    Resource(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Resource(_) => 4,
            _ => 3,
        }
    }
}
