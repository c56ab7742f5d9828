//! Library surface behind the `vsc` binary, exposed so integration tests can
//! drive the exact code paths the command line uses.

pub mod commands;
pub mod config;
pub mod output;
