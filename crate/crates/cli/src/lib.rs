//! Pipeline driver around `exactct-core`: synthetic cohorts, batch feature
//! extraction, threshold and model reports, SHAP tables and overlay bundles.

pub mod commands;
pub mod config;
pub mod error;
pub mod extract;
pub mod manifest;
pub mod render;
pub mod synth;
pub mod table;

pub use config::Config;
pub use error::{CliError, Result};
