//! Experiment plumbing around `sgc-core`: CSV datasets, TOML experiment configs, a
//! parallel sweep runner, `traces.csv`/`summary.csv` output, the bounds report and the
//! `sgc` command line.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod output;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use runner::{build_instance, run_experiment, CellSummary, ExperimentOutput};
