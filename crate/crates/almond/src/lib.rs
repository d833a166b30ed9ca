//! File formats, the training pipeline and the command-line interface built
//! on `almond-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod imageio;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod voc;

pub use error::{Error, Result};
