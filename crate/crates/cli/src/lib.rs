//! Experiment harness for aggregate-hmm: config-driven synthetic studies,
//! a grid-flow smoke test, and the plumbing behind the `aggregate-hmm`
//! binary.

pub mod config;
pub mod error;
pub mod gridflow;
pub mod runner;

pub use config::{ExperimentKind, Grid, RunConfig};
pub use error::{CliError, Result};
pub use gridflow::{grid_flow_smoke, FlowRow, GridFlowConfig, GridFlowResult};
pub use runner::{
    expand_grid, job_data, run_experiment, run_job, Job, JobData, JobOutput, Manifest, RunOptions,
};
