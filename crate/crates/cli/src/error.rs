use std::path::Path;

use thiserror::Error;
use tradeopt::economy::CalibrationError;
use tradeopt::equilibrium::EquilibriumError;
use tradeopt::game::GameError;
use tradeopt::sensitivity::SensitivityError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NonConvergence(String),
    #[error("{0}")]
    Io(String),
    /// A verification command ran but its check failed.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn from_calibration(e: CalibrationError, path: &Path) -> Self {
        let msg = format!("{}: {e}", path.display());
        match e {
            CalibrationError::Io(_) => CliError::Io(msg),
            _ => CliError::Validation(msg),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<EquilibriumError> for CliError {
    fn from(e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::Wedges(_) | EquilibriumError::Options(_) | EquilibriumError::StateLength { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::NonConvergence(e.to_string()),
        }
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        match e {
            SensitivityError::Equilibrium(inner) => inner.into(),
            SensitivityError::Objective(_) | SensitivityError::Step(_) => CliError::Validation(e.to_string()),
            _ => CliError::NonConvergence(e.to_string()),
        }
    }
}

impl From<GameError> for CliError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::Scenario(_) | GameError::Options(_) => CliError::Validation(e.to_string()),
            GameError::Equilibrium { ref source, .. } => match CliError::from(source.clone()) {
                CliError::Validation(_) => CliError::Validation(e.to_string()),
                _ => CliError::NonConvergence(e.to_string()),
            },
            GameError::Sensitivity(inner) => inner.into(),
        }
    }
}
