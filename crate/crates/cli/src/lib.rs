//! Library side of the `coopliable` command: CSV ingest, the model file
//! format and the simulate / fit / predict / bench subcommands.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod io;
pub mod run;
