//! `forge` command-line pipeline: configuration, synthetic data, stage
//! drivers and rendering.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod render;
pub mod synth;

pub use config::PipelineConfig;
pub use pipeline::Run;
