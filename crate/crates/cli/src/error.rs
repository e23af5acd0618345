use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("evaluation failure rate {rate:.2} exceeds {limit:.2}")]
    Threshold { rate: f64, limit: f64 },
    #[error("run failed: {0}")]
    Run(String),
    #[error("{0}")]
    CorruptTrace(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Index(_) => 3,
            CliError::Threshold { .. } => 4,
            CliError::Run(_) => 5,
            CliError::CorruptTrace(_) => 6,
        }
    }
}
