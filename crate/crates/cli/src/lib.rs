//! Experiment harness: dataset ingestion, parameter grids over
//! `(method, k, ε, β, m)`, and CSV / gnuplot-ready outputs.

pub mod experiment;

pub use experiment::{
    run_experiment, AttackSummary, DatasetFormat, ExperimentOutcome, ExperimentSpec, Mode,
};
