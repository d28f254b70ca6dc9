//! Experiment runner for the `ehsched` simulator: spec files in, CSV and
//! JSON results out.

pub mod bounds;
pub mod experiment;
pub mod spec;

pub use bounds::{bounds_csv, run_bounds, BoundsRow};
pub use experiment::{
    generate_trace, results_csv, run_experiment, write_outputs, ExperimentResults, RunError, RunRow,
};
pub use spec::{ExperimentSpec, Seeds, SpecError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}
