//! File formats, CLI commands and the HTTP service around `lv4d-core`.

pub use lv4d_core as core;

pub mod commands;
pub mod error;
pub mod io;
pub mod service;

pub use error::{CliError, Result};
