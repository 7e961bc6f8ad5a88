//! Configuration-driven benchmark sweeps with CSV output.

pub mod config;
pub mod experiment;

pub use config::{ExperimentConfig, Solver, SweepParam};
pub use experiment::{
    evaluate, run_experiment, run_trial, summarize, to_csv, write_csv, Evaluation, Summary, TrialRecord, CSV_HEADER,
};
