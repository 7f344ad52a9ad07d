//! Experiment runner: config files, sweeps, CSV and SVG output, benchmarks.

pub mod bench;
pub mod config;
pub mod svg;
pub mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use bench::{emit_bench, run_bench, BenchReport};
pub use config::{load_manifest, parse_config, Job, Overrides, RunManifest};
pub use sweep::{run_sweep, SweepReport, CSV_COLUMNS};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config file {} not found", path.display())]
    NotFound { path: PathBuf },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: malformed JSON: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}:{line}:{column}: invalid config: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: {field} = {value} is out of range: {constraint}")]
    Range {
        location: String,
        field: String,
        value: String,
        constraint: String,
    },
    #[error("unknown preset `{0}` (expected paper-heuristic, paper-stateless or paper-exact)")]
    UnknownPreset(String),
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
