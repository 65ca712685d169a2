//! Configuration, orchestration and rendering of whole analyses.

mod config;
mod harvest;
mod pipeline;
mod render;

pub use config::{
    BackendKind, ConfigError, ConfigLayer, OutputFormat, PatchSource, RunConfig, ENV_API_BASE, ENV_API_KEY, ENV_MODEL,
};
pub use harvest::harvest_definitions;
pub use pipeline::{
    backend_for, repo_options, run_batch, run_pipeline, AnalysisReport, FunctionReport, PipelineError, Timings,
    SCHEMA_VERSION,
};
pub use render::{render_json, render_markdown, render_report, REPORT_SCHEMA};
