//! Command-line front end for `corridor-core`: scenario files with demand
//! presets, training, multi-seed evaluation against fixed-time baselines,
//! sensitivity sweeps and the branching ablation.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod error;
pub mod report;
pub mod scenario;
pub mod stats;

pub use error::CliError;
