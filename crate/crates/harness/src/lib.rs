//! Experiment runner for safe online gradient descent under unknown linear
//! constraints: config files, LBMP price ingestion, seeded sweeps, CSV and
//! SVG artifacts, and the lemma checks behind the `verify` command.

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod experiment;
pub mod lbmp;
pub mod lemmas;
pub mod output;
pub mod svg;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("price data: {0}")]
    Lbmp(#[from] lbmp::LbmpError),
    #[error(transparent)]
    Core(#[from] safe_oco_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: {1}")]
    Csv(PathBuf, csv::Error),
    #[error("{0} already exists (pass --force to overwrite)")]
    Exists(PathBuf),
    #[error("aggregation: {0}")]
    Aggregate(String),
}
