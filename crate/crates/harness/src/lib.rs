//! Configuration, commands and output files of the `gridhit` command line tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod setup;
pub mod stats;
