//! Verification harness built on the stepper: the pathwise energy
//! identity, the a priori bound in expectation, discrete uniqueness and
//! coupled-path convergence studies.
//!
//! Monte Carlo work runs in parallel over path indices; every reduction
//! is then done sequentially in path order, so results do not depend on
//! the number of worker threads.

mod convergence;
mod energy;
mod ensemble;
mod uniqueness;

pub use convergence::{convergence_study, ConvergenceReport, ExactSolution, Level, LevelErrors, PathFailure, Reference};
pub use energy::{audit_energy, EnergyLedger, EnergyRow};
pub use ensemble::{
    audit_apriori, coupled_path, run_paths, AprioriReport, AprioriRow, EnsembleStats, MeanSe, PathSummary,
};
pub use uniqueness::{uniqueness_experiment, UniquenessReport};
