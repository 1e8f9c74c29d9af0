use ccm_core::CcmError;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Internal = 1,
    Config = 2,
    Input = 3,
    Refused = 4,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    pub fn new(status: ExitStatus, message: impl Into<String>) -> Self {
        CliError {
            status,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new(ExitStatus::Config, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError::new(ExitStatus::Internal, message)
    }

    pub fn code(&self) -> i32 {
        self.status as i32
    }
}

impl From<CcmError> for CliError {
    fn from(e: CcmError) -> Self {
        let status = match &e {
            CcmError::Config(_) | CcmError::Domain(_) => ExitStatus::Config,
            CcmError::InvalidSpec(_) | CcmError::Io(_) | CcmError::UnknownRank(_) => ExitStatus::Input,
            CcmError::EnumerationLimit { .. } => ExitStatus::Refused,
            CcmError::TaskNotOnRank { .. } | CcmError::Protocol(_) | CcmError::StaleCluster(_) => ExitStatus::Internal,
        };
        CliError::new(status, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
