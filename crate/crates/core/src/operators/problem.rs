use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    DampingOperator, ElasticOperator, Forcing, LinearDamping, NoiseOperator, NoiseParams, RhoDamping,
};
use crate::error::{check_dim, Result};
use crate::mesh::{FemSpace, GalerkinVector};

/// Initial datum given as a continuous function on (0, 1); instantiated on
/// a mesh by nodal interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// `a sin(k π x)`
    Sine { amplitude: f64, mode: u32 },
    /// Constant nodal value (not zero at the boundary; meant for surrogates).
    Constant { value: f64 },
}

impl InitialData {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Sine { amplitude, mode } => amplitude * (*mode as f64 * PI * x).sin(),
            Self::Constant { value } => *value,
        }
    }

    pub fn on(&self, space: &FemSpace) -> GalerkinVector {
        space.interpolate(|x| self.value(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DampingChoice {
    Rho,
    Linear { mu: f64 },
}

impl DampingChoice {
    pub fn build(&self) -> Result<Arc<dyn DampingOperator>> {
        Ok(match *self {
            Self::Rho => Arc::new(RhoDamping),
            Self::Linear { mu } => Arc::new(LinearDamping::new(mu)?),
        })
    }
}

/// Assumption constants, derived from the operator instances through the
/// sufficient-condition route (separate monotonicity/coercivity of A plus
/// a joint Lipschitz bound on C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    pub mu_a: f64,
    pub c_a: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub kappa: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub mu_b: f64,
    pub c_b: f64,
    pub lambda: f64,
}

impl AssumptionConstants {
    pub fn derive(damping: &dyn DampingOperator, elastic: &ElasticOperator, noise: &NoiseOperator) -> Self {
        let a = damping.constants();
        let (l3, l4, kappa) = (noise.lambda3(), noise.lambda4(), noise.kappa());
        // monotonicity-like needs λ_A ≥ λ₁ + λ₄/2 and λ_B ≥ λ₃/2,
        // coercivity-like needs λ_A ≥ λ₂ + λ₄, λ_B ≥ λ₃ and κ ≥ |C(0,0)|².
        let lambda_a = (a.lambda_monotone + 0.5 * l4).max(a.lambda_coercive + l4);
        let lambda_b = (0.5 * l3).max(l3);
        let mut c = Self {
            mu_a: a.mu_a,
            c_a: a.c_a,
            lambda_a,
            lambda_b,
            kappa,
            lambda1: a.lambda_monotone,
            lambda2: a.lambda_coercive,
            lambda3: l3,
            lambda4: l4,
            mu_b: elastic.mu_b(),
            c_b: elastic.c_b(),
            lambda: 0.0,
        };
        c.refresh_lambda();
        c
    }

    /// Recompute `λ = 2 max(λ_A, λ_B, κ)`.
    pub fn refresh_lambda(&mut self) {
        self.lambda = 2.0 * self.lambda_a.max(self.lambda_b).max(self.kappa);
    }
}

/// Mesh-independent problem description; [`ProblemFamily::instantiate`]
/// realizes it on a given Galerkin space.
#[derive(Debug, Clone)]
pub struct ProblemFamily {
    pub damping: DampingChoice,
    pub b: f64,
    pub noise: NoiseParams,
    pub modes: usize,
    pub forcing: Forcing,
    pub initial_u: InitialData,
    pub initial_v: InitialData,
}

impl ProblemFamily {
    pub fn instantiate(&self, m: usize) -> Result<ProblemSpec> {
        self.instantiate_in(Arc::new(FemSpace::new(m)?))
    }

    pub fn instantiate_in(&self, space: Arc<FemSpace>) -> Result<ProblemSpec> {
        let damping = self.damping.build()?;
        let elastic = ElasticOperator::new(self.b)?;
        let noise = NoiseOperator::new(&space, self.noise, self.modes, &elastic)?;
        let u0 = self.initial_u.on(&space);
        let v0 = self.initial_v.on(&space);
        ProblemSpec::new(space, damping, elastic, noise, self.forcing.clone(), u0, v0)
    }
}

/// Everything needed to run the scheme on one Galerkin space.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    space: Arc<FemSpace>,
    damping: Arc<dyn DampingOperator>,
    elastic: ElasticOperator,
    noise: NoiseOperator,
    forcing: Forcing,
    initial_u: GalerkinVector,
    initial_v: GalerkinVector,
    constants: AssumptionConstants,
}

impl ProblemSpec {
    pub fn new(
        space: Arc<FemSpace>,
        damping: Arc<dyn DampingOperator>,
        elastic: ElasticOperator,
        noise: NoiseOperator,
        forcing: Forcing,
        initial_u: GalerkinVector,
        initial_v: GalerkinVector,
    ) -> Result<Self> {
        check_dim(space.dim(), initial_u.len())?;
        check_dim(space.dim(), initial_v.len())?;
        let constants = AssumptionConstants::derive(damping.as_ref(), &elastic, &noise);
        Ok(Self {
            space,
            damping,
            elastic,
            noise,
            forcing,
            initial_u,
            initial_v,
            constants,
        })
    }

    /// Replace the derived constants (e.g. to audit a deliberately broken
    /// configuration). `λ` is recomputed afterwards.
    pub fn with_constants(mut self, f: impl FnOnce(&mut AssumptionConstants)) -> Self {
        f(&mut self.constants);
        self.constants.refresh_lambda();
        self
    }

    pub fn with_initial_data(mut self, u0: GalerkinVector, v0: GalerkinVector) -> Result<Self> {
        check_dim(self.space.dim(), u0.len())?;
        check_dim(self.space.dim(), v0.len())?;
        self.initial_u = u0;
        self.initial_v = v0;
        Ok(self)
    }

    pub fn space(&self) -> &FemSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<FemSpace> {
        &self.space
    }

    pub fn damping(&self) -> &dyn DampingOperator {
        self.damping.as_ref()
    }

    pub fn elastic(&self) -> &ElasticOperator {
        &self.elastic
    }

    pub fn noise(&self) -> &NoiseOperator {
        &self.noise
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn initial_u(&self) -> &GalerkinVector {
        &self.initial_u
    }

    pub fn initial_v(&self) -> &GalerkinVector {
        &self.initial_v
    }

    pub fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    pub fn lambda(&self) -> f64 {
        self.constants.lambda
    }

    pub fn norm_b_sq(&self, x: &[f64]) -> f64 {
        self.elastic.norm_b_sq(&self.space, x)
    }

    pub fn norm_h_sq(&self, x: &[f64]) -> f64 {
        self.space.norm_h_sq(x)
    }
}
