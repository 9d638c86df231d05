//! Config-driven runner: ingest, fit, report and sweep stages writing CSV/JSON artifacts plus a digest manifest.

mod config;
mod manifest;
mod run;

pub use config::{load_config, validate_config, DataSource, DistributionParams, ModelConfig, RunConfig, SourceKind};
pub use manifest::{build_manifest, list_files, role_of, sha256_hex, Manifest, ManifestEntry, MANIFEST_FILE};
pub use run::{fit_models, ingest, load_tables, run_pipeline, run_stage, Artifact, CohortSummary, ReportBundle, RunArtifacts, Stage};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n{}", .0.iter().map(|p| format!("  - {p}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("output error: {0}")]
    Io(String),
}
