//! Dataset generation, batch processing, evaluation and plot-data export on
//! top of the `fracim` library. The `fracim` binary is a thin argument
//! parser over the `cmd_*` functions here.

pub mod commands;
pub mod config;
pub mod store;

pub use commands::{cmd_eval, cmd_generate, cmd_run, cmd_stft_dump, with_workers, EvalSummary, MethodMedians, RunReport};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    /// Process exit status: 2 for configuration errors, 3 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<fracim::Error> for CliError {
    fn from(e: fracim::Error) -> Self {
        match e {
            fracim::Error::Config(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}
