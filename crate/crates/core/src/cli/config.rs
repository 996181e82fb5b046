//! TOML run configuration. Unknown keys are rejected at every level.
//!
//! ```toml
//! [problem]
//! damping = { kind = "rho" }          # or { kind = "linear", mu = 1.0 }
//! b = 1.0
//! noise = { alpha = 1.0, beta = 0.5, gamma = 1.0, decay = 1.0 }
//! initial_u = { kind = "sine", amplitude = 1.0, mode = 1 }
//! initial_v = { kind = "zero" }
//! forcing = { kind = "zero" }         # "manufactured" or "custom" with terms
//!
//! [discretization]
//! steps = 128
//! nodes = 63
//! modes = 8
//! horizon = 1.0
//!
//! [solver]
//! tol = 1e-10
//!
//! [experiment]
//! kind = "energy"
//! paths = 100
//! base_seed = 2024
//!
//! [output]
//! directory = "out"
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{Level, Reference};
use crate::error::{Error, Result};
use crate::operators::{
    DampingChoice, Forcing, ForcingTerm, InitialData, NoiseParams, ProblemFamily, ProblemSpec,
};
use crate::stepper::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingConfig {
    Rho,
    Linear { mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    #[default]
    Zero,
    /// Load that makes `u = sin(πt) sin(πx)` exact; linear damping only.
    Manufactured,
    Custom { terms: Vec<ForcingTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub damping: DampingConfig,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "NoiseParams::zero")]
    pub noise: NoiseParams,
    #[serde(default = "default_initial_u")]
    pub initial_u: InitialData,
    #[serde(default = "default_initial_v")]
    pub initial_v: InitialData,
    #[serde(default)]
    pub forcing: ForcingConfig,
}

fn one() -> f64 {
    1.0
}

fn default_initial_u() -> InitialData {
    InitialData::Sine { amplitude: 1.0, mode: 1 }
}

fn default_initial_v() -> InitialData {
    InitialData::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// `N`
    pub steps: usize,
    /// `m`, interior mesh nodes
    pub nodes: usize,
    /// `r`, noise modes
    pub modes: usize,
    /// `T`
    #[serde(default = "one")]
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Integrate and record the energy ledger, without auditing it.
    Single,
    Energy,
    Apriori,
    Uniqueness,
    Convergence,
    Assumptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "one_usize")]
    pub paths: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Compared levels of a convergence study, coarse to fine.
    #[serde(default)]
    pub levels: Vec<Level>,
    /// Reference of a convergence study. Without `reference_level` the
    /// finest reference doubles the last compared level.
    #[serde(default = "default_reference")]
    pub reference: Reference,
    #[serde(default)]
    pub reference_level: Option<Level>,
    /// Largest admissible relative energy defect.
    #[serde(default = "default_energy_tolerance")]
    pub energy_tolerance: f64,
    /// Scale of the initial-guess perturbation in uniqueness runs.
    #[serde(default = "one")]
    pub perturbation: f64,
    /// Sample count of the assumption check.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn one_usize() -> usize {
    1
}

fn default_reference() -> Reference {
    Reference::Finest
}

fn default_energy_tolerance() -> f64 {
    1e-8
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    /// Write `trajectory_<i>.csv` for single and energy runs.
    #[serde(default)]
    pub trajectories: bool,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
            trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Constants derived from the problem block on the configured mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derived {
    pub lambda: f64,
    pub lambda_b: f64,
    pub mu_b: f64,
    pub tau: f64,
    pub lambda_tau: f64,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parse, then validate with the step-size gate on.
pub fn parse_and_validate(text: &str) -> Result<RunConfig> {
    let config = parse(text)?;
    config.validate(true)?;
    Ok(config)
}

/// Parse without validating. Errors carry the TOML location.
pub fn parse(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| config_error(e.to_string()))
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn family(&self) -> ProblemFamily {
        let p = &self.problem;
        let (damping, mu) = match p.damping {
            DampingConfig::Rho => (DampingChoice::Rho, 0.0),
            DampingConfig::Linear { mu } => (DampingChoice::Linear { mu }, mu),
        };
        let forcing = match &p.forcing {
            ForcingConfig::Zero => Forcing::zero(),
            ForcingConfig::Manufactured => Forcing::manufactured(mu, p.b),
            ForcingConfig::Custom { terms } => Forcing { terms: terms.clone() },
        };
        ProblemFamily {
            damping,
            b: p.b,
            noise: p.noise,
            modes: self.discretization.modes,
            forcing,
            initial_u: p.initial_u.clone(),
            initial_v: p.initial_v.clone(),
        }
    }

    /// Problem on the configured mesh.
    pub fn spec(&self) -> Result<ProblemSpec> {
        self.family().instantiate(self.discretization.nodes)
    }

    pub fn tau(&self) -> f64 {
        self.discretization.horizon / self.discretization.steps as f64
    }

    pub fn derived(&self) -> Result<Derived> {
        let spec = self.spec()?;
        let c = spec.constants();
        Ok(Derived {
            lambda: c.lambda,
            lambda_b: c.lambda_b,
            mu_b: c.mu_b,
            tau: self.tau(),
            lambda_tau: c.lambda * self.tau(),
        })
    }

    /// Levels of a convergence study including the reference level, if
    /// it is a discretization.
    pub fn study_levels(&self) -> Vec<Level> {
        let mut levels = self.experiment.levels.clone();
        if self.experiment.reference == Reference::Finest {
            let reference = self.experiment.reference_level.or_else(|| {
                levels.last().map(|l| Level {
                    steps: 2 * l.steps,
                    nodes: 2 * l.nodes + 1,
                    modes: l.modes,
                })
            });
            levels.extend(reference);
        }
        levels
    }

    /// Check every invariant. With `gate` the step-size condition
    /// `λτ < 1` is enforced on the configured discretization and on every
    /// level of a convergence study.
    pub fn validate(&self, gate: bool) -> Result<()> {
        let d = &self.discretization;
        if !(d.horizon > 0.0 && d.horizon.is_finite()) {
            return Err(config_error(format!("horizon T = {} must be positive", d.horizon)));
        }
        for (name, value) in [("steps", d.steps), ("nodes", d.nodes), ("modes", d.modes)] {
            if value == 0 {
                return Err(config_error(format!("discretization.{name} must be at least 1")));
            }
        }
        let e = &self.experiment;
        if e.paths == 0 {
            return Err(config_error("experiment.paths must be at least 1"));
        }
        if e.samples == 0 {
            return Err(config_error("experiment.samples must be at least 1"));
        }
        if !(e.energy_tolerance > 0.0) {
            return Err(config_error("experiment.energy_tolerance must be positive"));
        }
        if !(e.perturbation >= 0.0 && e.perturbation.is_finite()) {
            return Err(config_error("experiment.perturbation must be finite and non-negative"));
        }
        if self.problem.forcing == ForcingConfig::Manufactured
            && !matches!(self.problem.damping, DampingConfig::Linear { .. })
        {
            return Err(config_error("manufactured forcing requires linear damping"));
        }
        if self.output.formats.is_empty() {
            return Err(config_error("output.formats must not be empty"));
        }
        self.solver.validate().map_err(|e| config_error(e.to_string()))?;
        let spec = self.spec().map_err(|e| config_error(e.to_string()))?;
        if gate {
            check_gate(spec.lambda(), d.horizon, d.steps)?;
        }
        if e.kind == ExperimentKind::Convergence {
            let levels = self.study_levels();
            let min = if e.reference == Reference::Finest { 2 } else { 1 };
            if levels.len() < min {
                return Err(config_error("convergence experiments need experiment.levels"));
            }
            if gate {
                for l in &levels {
                    let mut family = self.family();
                    family.modes = l.modes;
                    let spec = family.instantiate(l.nodes).map_err(|e| config_error(e.to_string()))?;
                    check_gate(spec.lambda(), d.horizon, l.steps)?;
                }
            }
        }
        Ok(())
    }
}

fn check_gate(lambda: f64, horizon: f64, steps: usize) -> Result<()> {
    let lambda_tau = lambda * horizon / steps as f64;
    if !(lambda_tau < 1.0) {
        return Err(config_error(format!(
            "lambda*tau = {lambda_tau} >= 1 with N = {steps}; the discrete a priori estimate needs lambda*tau < 1"
        )));
    }
    Ok(())
}
