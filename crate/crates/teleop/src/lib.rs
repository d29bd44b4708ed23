//! Mouse teleoperation over WebSocket: a paced simulation loop that streams
//! state, applies pointer targets as bounded paddle actions, and records
//! demonstration trajectories.

mod protocol;
mod server;
mod session;

use thiserror::Error;

pub use protocol::{map_target, BodySummary, Control, StateBroadcast, TableSummary, TeleopMessage};
pub use server::{serve, spawn, ServerHandle, TeleopConfig};
pub use session::Session;

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("bind: {0}")]
    Bind(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Env(#[from] airhockey_core::env::EnvError),
    #[error(transparent)]
    Dataset(#[from] airhockey_core::datasets::DatasetError),
}
