//! Scenario files, the live control stream and batch sweeps.

pub mod scenario;
pub mod server;
pub mod sweep;

pub use crate::engine::command::Command;
pub use scenario::{load_scenario, ScenarioConfig, ScenarioError, ScriptedAction};
