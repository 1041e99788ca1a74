//! File formats, configuration and the `metsk` command line on top of
//! `metsk-core`.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod model_io;

pub use error::{Error, Result};
