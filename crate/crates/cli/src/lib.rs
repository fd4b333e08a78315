//! File formats, parallel workers and subcommands behind the `msp` binary.

pub mod commands;
pub mod io;
pub mod parallel;
