//! Run configuration, command implementations, and artifact emission.
//!
//! The configuration file is a strict key=value format with sections; see
//! the repository README for the full schema. Unknown sections or keys are
//! rejected. Every default matches the reference training setup.

mod commands;
mod config;
pub mod gradcheck;
mod svg;

pub use commands::{
    cmd_diagnose, cmd_gradcheck, cmd_train, load_config, pack_checkpoint, unpack_checkpoint,
    DiagnoseArgs, DiagnoseMode, LoadedRun, TrainArtifacts,
};
pub use config::{parse_config, resolved_snapshot, RolloutSettings, RunConfig};
pub use svg::vector_field_svg;

use thiserror::Error;

/// Exit-code contract: 2 config error, 3 IO error, 4 numeric failure,
/// 1 gradient-check failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("numeric failure (non-finite loss) at training step {step}")]
    Numeric { step: u64 },
    #[error("gradient check failed for: {0}")]
    Gradcheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Gradcheck(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric { .. } => 4,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<crate::train::TrainError> for CliError {
    fn from(e: crate::train::TrainError) -> Self {
        match e {
            crate::train::TrainError::Numeric { step } => CliError::Numeric { step },
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<crate::rollout::RolloutError> for CliError {
    fn from(e: crate::rollout::RolloutError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<crate::diag::DiagError> for CliError {
    fn from(e: crate::diag::DiagError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<crate::nn::CheckpointError> for CliError {
    fn from(e: crate::nn::CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}
