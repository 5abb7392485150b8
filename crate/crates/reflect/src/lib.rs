//! File formats, checkpoints, reports and the `reflect` command-line runner
//! built on `reflect-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod embeddings;
pub mod error;
pub mod fsutil;
pub mod pairs;
pub mod report;
pub mod workflow;

pub use error::{Error, Result};
