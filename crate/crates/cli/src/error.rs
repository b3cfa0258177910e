use pdanet_core::CoreError;
use pdanet_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or missing inputs.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn core_is_usage(e: &CoreError) -> bool {
    matches!(e, CoreError::Domain(_) | CoreError::Validation(_) | CoreError::Config(_))
}

impl CliError {
    /// 2 for usage and validation failures, 1 for failures while doing the work.
    pub fn exit_code(&self) -> i32 {
        let usage = match self {
            CliError::Usage(_) => true,
            CliError::Core(e) => core_is_usage(e),
            CliError::Nn(NnError::Core(e)) => core_is_usage(e),
            CliError::Nn(e) => matches!(e, NnError::Validation(_) | NnError::Config(_) | NnError::Shape(_)),
            CliError::Io(_) | CliError::Json(_) => false,
        };
        if usage {
            2
        } else {
            1
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
