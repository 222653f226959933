//! Command-line front end and local HTTP server for the editing engine.

pub mod commands;
pub mod config;
pub mod engine;
pub mod serve;

pub use commands::{run, Cli};
pub use config::{EngineConfig, Overrides};
pub use engine::{AskOptions, Engine};
