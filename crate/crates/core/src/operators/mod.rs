//! Damping (A), elastic (B) and noise (C) operators on the P1 space, plus
//! the assembled problem description and its assumption audit.

mod audit;
mod forcing;
mod problem;

use std::fmt::Debug;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, SymTridiag};
use crate::mesh::{FemSpace, GalerkinVector};

pub use audit::{check_assumptions, AuditCheck, AuditReport, Witness};
pub use forcing::{Forcing, ForcingTerm, SpaceProfile, TimeProfile};
pub use problem::{AssumptionConstants, DampingChoice, InitialData, ProblemFamily, ProblemSpec};

/// Below this magnitude the derivative of `rho` is evaluated at the floor
/// instead of blowing up; only the Jacobian sees it, never the residual.
pub const RHO_DERIVATIVE_FLOOR: f64 = 1e-10;

/// The damping nonlinearity: `|z|^{-1/2} z` inside the unit ball, the
/// identity outside, zero at the origin.
pub fn rho(z: f64) -> f64 {
    let a = z.abs();
    if a == 0.0 {
        0.0
    } else if a < 1.0 {
        z / a.sqrt()
    } else {
        z
    }
}

/// Generalized derivative of [`rho`]. At the kink `|z| = 1` the inner
/// branch (`1/2`) is used.
pub fn rho_derivative(z: f64) -> f64 {
    let a = z.abs();
    if a <= 1.0 {
        0.5 / a.max(RHO_DERIVATIVE_FLOOR).sqrt()
    } else {
        1.0
    }
}

/// Convex potential whose derivative is [`rho`].
pub fn rho_potential(z: f64) -> f64 {
    let a = z.abs();
    if a <= 1.0 {
        2.0 / 3.0 * a * a.sqrt()
    } else {
        0.5 * a * a + 1.0 / 6.0
    }
}

/// Structural constants of a damping operator with linear growth (p = 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingConstants {
    /// Coercivity constant μ_A.
    pub mu_a: f64,
    /// Shift making `A + λ I` monotone.
    pub lambda_monotone: f64,
    /// Shift in `⟨Aw,w⟩ + λ|w|² ≥ μ_A ‖w‖²`.
    pub lambda_coercive: f64,
    /// Growth constant: `‖Aw‖_{V*} ≤ c_A (1 + ‖w‖)`.
    pub c_a: f64,
}

/// Contract for the nonlinear damping operator A. `apply` returns dual
/// coefficients `⟨Av, φ_i⟩`.
pub trait DampingOperator: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn apply(&self, space: &FemSpace, v: &[f64]) -> GalerkinVector;

    /// Generalized Jacobian at `v`.
    fn jacobian(&self, space: &FemSpace, v: &[f64]) -> SymTridiag;

    /// Symmetric `S(v)` with `S(v) v = A(v)`, more conservative than the
    /// Jacobian. Solving with it is a lagged-diffusivity (Kačanov) step,
    /// which decreases the step energy whenever the flux is a concave
    /// function of the squared gradient. Defaults to the Jacobian.
    fn secant_jacobian(&self, space: &FemSpace, v: &[f64]) -> SymTridiag {
        self.jacobian(space, v)
    }

    fn jacobian_apply(&self, space: &FemSpace, v: &[f64], dir: &[f64]) -> GalerkinVector {
        self.jacobian(space, v).mul_vec(dir).into()
    }

    /// Convex potential `Ψ` with `apply = ∇Ψ`.
    fn potential(&self, space: &FemSpace, v: &[f64]) -> f64;

    fn constants(&self) -> DampingConstants;

    /// Coefficient `c` such that `c K` is a globally valid linear
    /// surrogate of the Jacobian; used to precondition the fixed-point
    /// fallback of the step solver.
    fn reference_slope(&self) -> f64;
}

/// `⟨Av, w⟩ = ∫ rho(∇v) ∇w dx`, integrated exactly cell by cell.
#[derive(Debug, Clone, Copy, Default)]
pub struct RhoDamping;

impl DampingOperator for RhoDamping {
    fn name(&self) -> &'static str {
        "rho"
    }

    fn apply(&self, space: &FemSpace, v: &[f64]) -> GalerkinVector {
        let flux: Vec<f64> = space
            .gradient_at_cells(v)
            .expect("dimension checked by caller")
            .into_iter()
            .map(rho)
            .collect();
        // h * rho(g_c) * (±1/h) on the two cells touching each node
        (0..v.len()).map(|k| flux[k] - flux[k + 1]).collect::<Vec<_>>().into()
    }

    fn jacobian(&self, space: &FemSpace, v: &[f64]) -> SymTridiag {
        let h = space.mesh().width();
        let w: Vec<f64> = space
            .gradient_at_cells(v)
            .expect("dimension checked by caller")
            .into_iter()
            .map(|g| rho_derivative(g) / h)
            .collect();
        let m = v.len();
        let diag = (0..m).map(|i| w[i] + w[i + 1]).collect();
        let off = (0..m.saturating_sub(1)).map(|i| -w[i + 1]).collect();
        SymTridiag::new(diag, off).expect("consistent shapes")
    }

    fn secant_jacobian(&self, space: &FemSpace, v: &[f64]) -> SymTridiag {
        let h = space.mesh().width();
        let w: Vec<f64> = space
            .gradient_at_cells(v)
            .expect("dimension checked by caller")
            .into_iter()
            .map(|g| {
                let z = g.abs().max(RHO_DERIVATIVE_FLOOR);
                rho(z) / (z * h)
            })
            .collect();
        let m = v.len();
        let diag = (0..m).map(|i| w[i] + w[i + 1]).collect();
        let off = (0..m.saturating_sub(1)).map(|i| -w[i + 1]).collect();
        SymTridiag::new(diag, off).expect("consistent shapes")
    }

    /// `Ψ(v) = Σ_cells h ψ(∇v)`.
    fn potential(&self, space: &FemSpace, v: &[f64]) -> f64 {
        let h = space.mesh().width();
        space
            .gradient_at_cells(v)
            .expect("dimension checked by caller")
            .into_iter()
            .map(|g| h * rho_potential(g))
            .sum()
    }

    fn constants(&self) -> DampingConstants {
        // rho(z) z >= z², rho' >= 1/2 and |rho(z)| <= 1 + |z|.
        DampingConstants {
            mu_a: 1.0,
            lambda_monotone: 0.0,
            lambda_coercive: 0.0,
            c_a: 1.0,
        }
    }

    fn reference_slope(&self) -> f64 {
        1.0
    }
}

/// Strongly monotone linear damping `A = -μ Δ`.
#[derive(Debug, Clone, Copy)]
pub struct LinearDamping {
    mu: f64,
}

impl LinearDamping {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!("must be positive and finite, got {mu}"),
            });
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl DampingOperator for LinearDamping {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn apply(&self, space: &FemSpace, v: &[f64]) -> GalerkinVector {
        space.stiffness().mul_vec(v).into_iter().map(|x| self.mu * x).collect::<Vec<_>>().into()
    }

    fn jacobian(&self, space: &FemSpace, _v: &[f64]) -> SymTridiag {
        space.stiffness().scaled(self.mu)
    }

    fn potential(&self, space: &FemSpace, v: &[f64]) -> f64 {
        0.5 * self.mu * space.stiffness().bilinear(v, v)
    }

    fn constants(&self) -> DampingConstants {
        DampingConstants {
            mu_a: self.mu,
            lambda_monotone: 0.0,
            lambda_coercive: 0.0,
            c_a: self.mu,
        }
    }

    fn reference_slope(&self) -> f64 {
        self.mu
    }
}

/// Elastic operator `B = -b Δ`; induces `(w, z)_B = b wᵀ K z`.
#[derive(Debug, Clone, Copy)]
pub struct ElasticOperator {
    b: f64,
}

impl ElasticOperator {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: format!("must be positive and finite, got {b}"),
            });
        }
        Ok(Self { b })
    }

    pub fn coefficient(&self) -> f64 {
        self.b
    }

    /// Strong positivity constant with respect to the H¹₀ seminorm.
    pub fn mu_b(&self) -> f64 {
        self.b
    }

    pub fn c_b(&self) -> f64 {
        self.b
    }

    pub fn apply(&self, space: &FemSpace, u: &[f64]) -> GalerkinVector {
        space.stiffness().mul_vec(u).into_iter().map(|x| self.b * x).collect::<Vec<_>>().into()
    }

    pub fn matrix(&self, space: &FemSpace) -> SymTridiag {
        space.stiffness().scaled(self.b)
    }

    pub fn inner_b(&self, space: &FemSpace, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.b * space.inner_grad(x, y)?)
    }

    pub fn norm_b_sq(&self, space: &FemSpace, x: &[f64]) -> f64 {
        self.b * space.norm_grad_sq(x)
    }
}

/// Parameters of the diagonal spectral noise
/// `C_j(u, v) = j^{-s} (α (u, e_j) + β (v, e_j) + γ) e_j`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    1.0
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            decay: 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0 && self.gamma == 0.0
    }
}

/// Diagonal multiplicative noise truncated to `modes` modes.
#[derive(Debug, Clone)]
pub struct NoiseOperator {
    params: NoiseParams,
    b: f64,
    weights: Vec<f64>,
    basis: Vec<GalerkinVector>,
    // M e_j, so that (u, e_j)_H is a plain dot product
    dual_basis: Vec<Vec<f64>>,
}

impl NoiseOperator {
    pub fn new(space: &FemSpace, params: NoiseParams, modes: usize, elastic: &ElasticOperator) -> Result<Self> {
        if modes == 0 {
            return Err(Error::ZeroDimension);
        }
        if modes > space.dim() {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!("{modes} modes requested but the space has dimension {}", space.dim()),
            });
        }
        if !(params.decay > 0.5) {
            return Err(Error::InvalidParameter {
                name: "decay",
                reason: format!("must exceed 1/2 for a summable noise, got {}", params.decay),
            });
        }
        for (name, v) in [("alpha", params.alpha), ("beta", params.beta), ("gamma", params.gamma)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite".into(),
                });
            }
        }
        let basis = (1..=modes).map(|j| space.eigenmode(j)).collect::<Result<Vec<_>>>()?;
        let dual_basis = basis.iter().map(|e| space.mass().mul_vec(e)).collect();
        let weights = (1..=modes).map(|j| (j as f64).powf(-params.decay)).collect();
        Ok(Self {
            params,
            b: elastic.coefficient(),
            weights,
            basis,
            dual_basis,
        })
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    pub fn is_zero(&self) -> bool {
        self.params.is_zero()
    }

    /// Scalar amplitude of mode `j` (0-based): `C_j(u, v) = amp_j e_j`.
    fn amplitude(&self, u: &[f64], v: &[f64], j: usize) -> f64 {
        let p = &self.params;
        let mut a = p.gamma;
        if p.alpha != 0.0 {
            a += p.alpha * dot(u, &self.dual_basis[j]);
        }
        if p.beta != 0.0 {
            a += p.beta * dot(v, &self.dual_basis[j]);
        }
        self.weights[j] * a
    }

    /// `(C_1(u, v), …, C_r(u, v))` as H-valued coefficient vectors.
    pub fn apply(&self, u: &[f64], v: &[f64], r: usize) -> Result<Vec<GalerkinVector>> {
        self.check_modes(r)?;
        check_dim(self.basis[0].len(), u.len())?;
        check_dim(self.basis[0].len(), v.len())?;
        Ok((0..r).map(|j| self.basis[j].scaled(self.amplitude(u, v, j))).collect())
    }

    /// `C^r(u, v) ΔW = Σ_j C_j(u, v) ΔW_j`, with `r = increments.len()`.
    pub fn combine(&self, u: &[f64], v: &[f64], increments: &[f64]) -> Result<GalerkinVector> {
        self.check_modes(increments.len())?;
        let mut out = GalerkinVector::zeros(u.len());
        for (j, dw) in increments.iter().enumerate() {
            if *dw != 0.0 {
                out.axpy(self.amplitude(u, v, j) * dw, &self.basis[j]);
            }
        }
        Ok(out)
    }

    /// `|C^r(u, v)|²_{l²(H)}` using H-orthonormality of the modes.
    pub fn hs_norm_sq(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.modes()).map(|j| self.amplitude(u, v, j).powi(2)).sum()
    }

    fn check_modes(&self, r: usize) -> Result<()> {
        if r > self.modes() {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!("{r} modes requested, {} available", self.modes()),
            });
        }
        Ok(())
    }

    fn cross_factor(&self) -> f64 {
        if self.params.alpha != 0.0 && self.params.beta != 0.0 {
            2.0
        } else {
            1.0
        }
    }

    /// λ₃ in `|C(u,w) - C(v,z)|² ≤ λ₃|u-v|²_B + λ₄|w-z|²`. Uses
    /// `Σ κ_j² (d, e_j)² ≤ |d|²_B / (b π²)`, valid since every discrete
    /// Dirichlet eigenvalue is at least π².
    pub fn lambda3(&self) -> f64 {
        let k1 = self.weights[0];
        self.cross_factor() * self.params.alpha.powi(2) * k1 * k1 / (self.b * std::f64::consts::PI.powi(2))
    }

    /// λ₄, see [`Self::lambda3`].
    pub fn lambda4(&self) -> f64 {
        let k1 = self.weights[0];
        self.cross_factor() * self.params.beta.powi(2) * k1 * k1
    }

    /// `|C(0, 0)|²_{l²(H)}`.
    pub fn kappa(&self) -> f64 {
        self.weights.iter().map(|k| (k * self.params.gamma).powi(2)).sum()
    }
}
