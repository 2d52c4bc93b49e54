//! Command-line tools and the live human-vs-agent game server.

pub mod commands;
pub mod protocol;
pub mod server;
pub mod session;
