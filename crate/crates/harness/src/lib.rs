//! Scenario files, presets, output files and the `tdma-sync` CLI.

pub mod cli;
pub mod output;
pub mod presets;
pub mod scenario_file;

use tdma_sync::airtime::AirtimeError;
use tdma_sync::sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad arguments, parameters or scenario content.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

impl From<AirtimeError> for HarnessError {
    fn from(e: AirtimeError) -> Self {
        HarnessError::Validation(e.to_string())
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(_) | SimError::Compare(_) | SimError::Clock(_) | SimError::Airtime(_) => {
                HarnessError::Validation(e.to_string())
            }
            SimError::Protocol(_) => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
