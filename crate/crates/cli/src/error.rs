use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("configuration needs a `{0}` entry for this command")]
    Missing(&'static str),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("{command} failed: {source}")]
    Run {
        command: String,
        #[source]
        source: rdsw_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("thread pool: {0}")]
    Pool(String),

    #[error("{0} acceptance case(s) failed")]
    Acceptance(usize),
}

impl CliError {
    /// 2 for configuration and parameter problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Missing(_) | CliError::Invalid(_) => 2,
            CliError::Run {
                source:
                    rdsw_core::Error::InvalidParameter { .. }
                    | rdsw_core::Error::ProbsNotNormalized { .. }
                    | rdsw_core::Error::DegenerateProbability { .. }
                    | rdsw_core::Error::PhaseSpaceMismatch { .. },
                ..
            } => 2,
            _ => 1,
        }
    }
}
