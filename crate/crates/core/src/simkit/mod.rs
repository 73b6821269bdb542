//! Monte Carlo harness, metrics and reference scanning baselines.

pub mod baselines;
pub mod experiment;
pub mod metrics;

pub use experiment::{
    run_experiment, run_proposed_detail, run_trial, AggregateRow, ExperimentResult, ExperimentSpec, Method,
    ProposedTrial, SweepVar, TrialRecord, TrialRow,
};
