//! Companion to `sphface-core`: text file formats, CSV manifests and
//! reports, TOML configuration, parallel drivers and the `sphface` CLI
//! stages (`synth`, `preprocess`, `learn`, `evaluate`).

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod report;
pub mod textfmt;

pub use error::{Error, Result};
pub use sphface_core as core;
