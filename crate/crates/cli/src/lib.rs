//! Command-line front end: scenario files, the `ml`, `solve`, `analyze` and
//! `reproduce` commands, and exit codes.

pub mod commands;
pub mod config;
pub mod error;
pub mod reproduce;
