//! Command-line tools and the HTTP session service for the chain-of-diagnosis engine.

pub mod cli;
pub mod repl;
pub mod server;
