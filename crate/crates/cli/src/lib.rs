//! Configuration loading, engine orchestration and table output behind the
//! `bulkvac` binary.

pub mod commands;
pub mod output;
pub mod run_config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] bulkvac::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 0 ok, 2 configuration, 3 instability, 4 numerical or runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(e) => e.exit_code(),
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
