//! Command-line front end for urylab: JSON file formats, reports, subcommands
//! and replayable scenarios.

pub mod commands;
pub mod io;
pub mod report;
pub mod scenarios;
