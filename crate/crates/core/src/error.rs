use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Physical parameters outside the supported regime.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular propagator: {0}")]
    Singularity(String),
    #[error("singular matrix in {context} (condition estimate {condition:.3e})")]
    SingularMatrix { context: String, condition: f64 },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
