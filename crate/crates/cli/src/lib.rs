//! Command-line front end: configuration, run manifests, exports,
//! validation tables and standalone HTML maps.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod exports;
pub mod fixtures;
pub mod geometry;
pub mod html;
pub mod manifest;

pub use error::{CliError, ErrorKind};
