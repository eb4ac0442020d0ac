//! IO, file formats, run configuration, and pipeline orchestration for
//! co-enrolment network analysis. The algorithms live in `coenet-core`.

pub mod config;
pub mod export;
pub mod ingest;
pub mod pipeline;

pub use config::{GeneratorConfigFile, RunConfig};
pub use pipeline::{run_pipeline, Manifest, PipelineOutcome};
