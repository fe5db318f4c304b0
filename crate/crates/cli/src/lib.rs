//! Library side of the `stance` binary: run configuration, the four
//! pipeline commands, and a synthetic corpus for smoke runs.

pub mod commands;
pub mod config;
pub mod synth;

pub use commands::{evaluate, featurize, report_from_confusion, score, train};
pub use config::{Overrides, RunConfig};
