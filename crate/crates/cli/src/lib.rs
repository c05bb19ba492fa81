//! Command-line and WebSocket front end for `topocut-core`.

pub mod commands;
pub mod protocol;
pub mod serve;
