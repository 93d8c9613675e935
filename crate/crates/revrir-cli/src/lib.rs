//! Library surface of the command pipeline: run configuration with presets,
//! and the per-command implementations the binary dispatches to.

pub mod config;
pub mod pipeline;
