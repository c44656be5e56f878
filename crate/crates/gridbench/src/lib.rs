//! Harness around `gridbench-core`.
//!
//! Reads run configurations, generates or loads scenes and tasks, runs
//! episode suites in parallel, persists JSONL logs with CSV and JSON
//! summaries, renders trajectories, and connects external policies through
//! a newline-delimited JSON bridge.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod config;
pub mod io;
pub mod render;
pub mod suite;

use std::path::PathBuf;

pub use gridbench_core as core;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] gridbench_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bridge: {0}")]
    Bridge(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
