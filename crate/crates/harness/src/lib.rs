//! Batch runner, aggregation and acceptance checks for the noisefield
//! directions.

pub mod acceptance;
pub mod aggregate;
pub mod config;
pub mod runner;

use noisefield_core::action::ActionError;
use noisefield_core::crowd::CrowdError;
use noisefield_core::spawn::SpawnError;
use noisefield_core::worldgen::WorldError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Crowd(#[from] CrowdError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Spawn(#[from] SpawnError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
