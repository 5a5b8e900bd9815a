//! Command-line front end for the super-resolution engine: configuration
//! parsing, PNG and checkpoint I/O, evaluation reports, and a built-in
//! invariant suite.

pub mod bridge;
pub mod commands;
pub mod config;
pub mod pngio;
pub mod report;
pub mod selfcheck;
