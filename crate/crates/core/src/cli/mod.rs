//! Config-driven experiment runner behind the `dampwave` binary.

mod config;
mod run;

pub use config::{
    parse, parse_and_validate, DampingConfig, Derived, DiscretizationConfig, ExperimentConfig, ExperimentKind,
    ForcingConfig, OutputConfig, OutputFormat, ProblemConfig, RunConfig,
};
pub use run::{run_experiment, ExitStatus, Failure, RunOptions};
