//! Configuration and subcommand plumbing for the `sptrain` binary.

pub mod config;
pub mod runner;
