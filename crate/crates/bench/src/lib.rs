//! Benchmark harness for the conditional diffusion sampler.
//!
//! Wires the core sampler and metrics into reproducible desk-scale
//! experiments: task registry, method configurations with grid expansion,
//! budget-matched execution, append-only run manifests, and CSV figure
//! data. The binary front-end lives in `main.rs`; everything here is
//! library code so the acceptance suite can drive it directly.

pub mod config;
pub mod figures;
pub mod manifest;
pub mod methods;
pub mod runner;
pub mod sweep;
pub mod tasks;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("target: {0}")]
    Target(#[from] cds_core::targets::TargetError),
    #[error("tempering: {0}")]
    Tempering(#[from] cds_core::tempering::TemperingError),
    #[error("sampler: {0}")]
    Cds(#[from] cds_core::cds::CdsError),
    #[error("metrics: {0}")]
    Metrics(#[from] cds_core::metrics::MetricsError),
    #[error("fixture not found at {path}; generate it with `cds-bench make-reference --task lj-13`")]
    MissingFixture { path: String },
    #[error("no input: {0}")]
    EmptyInput(String),
    #[error("run failure: {0}")]
    RunFailure(String),
}

/// Exit codes for the CLI: success, config error, run failure, empty input.
pub fn exit_code(err: &BenchError) -> i32 {
    match err {
        BenchError::Config(_) | BenchError::Toml(_) => 1,
        BenchError::EmptyInput(_) => 3,
        _ => 2,
    }
}
