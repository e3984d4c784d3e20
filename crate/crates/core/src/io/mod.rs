//! File formats and the command implementations behind the CLI.

pub mod case;
pub mod commands;
pub mod config;
pub mod report;
pub mod tables;
