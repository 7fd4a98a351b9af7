//! Pipeline driver and command-line front end.

pub mod commands;
pub mod config;
pub mod pipeline;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, run_pipeline_with, run_stage, Ledger, Stage};
