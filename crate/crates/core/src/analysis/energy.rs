use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::linalg::dot;
use crate::noise::WienerPath;
use crate::operators::ProblemSpec;
use crate::stepper::{noise_term, ForcingGrid, SchemeParams, Trajectory};

/// Cumulative terms of the energy identity up to step `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub n: usize,
    /// `|vⁿ|²`
    pub v_sq: f64,
    /// `Σ_{j≤n} |vʲ - vʲ⁻¹|²`
    pub dv_sum: f64,
    /// `|uⁿ|²_B`
    pub u_b_sq: f64,
    /// `Σ_{j≤n} |uʲ - uʲ⁻¹|²_B`
    pub du_b_sum: f64,
    /// `2τ Σ ⟨A vʲ, vʲ⟩`
    pub damping: f64,
    /// `2τ Σ ⟨fʲ, vʲ⟩`
    pub forcing: f64,
    /// `2 Σ (C(uʲ⁻¹, vʲ⁻¹) ΔWʲ, vʲ)`
    pub noise: f64,
    /// `2τ Σ ‖Rʲ‖₂ ‖vʲ‖₂` in coefficient 2-norms, a bound on `|lhs - rhs|` from solver residuals.
    pub defect_bound: f64,
}

/// ```text
/// |vⁿ|² + Σ|Δv|² + |uⁿ|²_B + Σ|Δu|²_B + 2τΣ⟨Av, v⟩
///   = |v⁰|² + |u⁰|²_B + 2τΣ⟨f, v⟩ + 2Σ(C ΔW, v)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub v0_sq: f64,
    pub u0_b_sq: f64,
    pub rows: Vec<EnergyRow>,
}

impl EnergyRow {
    pub fn lhs(&self) -> f64 {
        self.v_sq + self.dv_sum + self.u_b_sq + self.du_b_sum + self.damping
    }
}

impl EnergyLedger {
    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    /// Row for step `n` in `1..=N`.
    pub fn row(&self, n: usize) -> &EnergyRow {
        &self.rows[n - 1]
    }

    pub fn lhs(&self, n: usize) -> f64 {
        self.row(n).lhs()
    }

    pub fn rhs(&self, n: usize) -> f64 {
        let r = self.row(n);
        self.v0_sq + self.u0_b_sq + r.forcing + r.noise
    }

    pub fn defect(&self, n: usize) -> f64 {
        (self.lhs(n) - self.rhs(n)).abs()
    }

    /// Sum of the magnitudes of all terms at step `n`.
    pub fn scale(&self, n: usize) -> f64 {
        let r = self.row(n);
        [
            r.v_sq,
            r.dv_sum,
            r.u_b_sq,
            r.du_b_sum,
            r.damping,
            self.v0_sq,
            self.u0_b_sq,
            r.forcing,
            r.noise,
        ]
        .iter()
        .map(|x| x.abs())
        .sum()
    }

    /// Defect at `n` over [`Self::scale`]; zero when every term vanishes.
    pub fn relative_defect(&self, n: usize) -> f64 {
        let s = self.scale(n);
        if s == 0.0 {
            0.0
        } else {
            self.defect(n) / s
        }
    }

    pub fn final_relative_defect(&self) -> f64 {
        self.relative_defect(self.steps())
    }

    pub fn max_relative_defect(&self) -> f64 {
        (1..=self.steps()).map(|n| self.relative_defect(n)).fold(0.0, f64::max)
    }
}

/// Recompute every term of the energy identity from a trajectory.
pub fn audit_energy(
    traj: &Trajectory,
    path: &WienerPath,
    forcing: &ForcingGrid,
    spec: &ProblemSpec,
    params: &SchemeParams,
) -> Result<EnergyLedger> {
    let steps = traj.steps();
    check_dim(steps, path.steps())?;
    check_dim(steps, forcing.steps())?;
    let space = spec.space();
    let tau = params.tau();
    let mut acc = EnergyRow {
        n: 0,
        v_sq: 0.0,
        dv_sum: 0.0,
        u_b_sq: 0.0,
        du_b_sum: 0.0,
        damping: 0.0,
        forcing: 0.0,
        noise: 0.0,
        defect_bound: 0.0,
    };
    let mut rows = Vec::with_capacity(steps);
    for n in 1..=steps {
        let (v, vp, u, up) = (&traj.v[n], &traj.v[n - 1], &traj.u[n], &traj.u[n - 1]);
        let noise = noise_term(spec, path, n, up, vp)?;
        let v_sq = space.norm_h_sq(v);
        acc.n = n;
        acc.v_sq = v_sq;
        acc.dv_sum += space.norm_h_sq(&(v - vp));
        acc.u_b_sq = spec.norm_b_sq(u);
        acc.du_b_sum += spec.norm_b_sq(&(u - up));
        acc.damping += 2.0 * tau * dot(&spec.damping().apply(space, v), v);
        acc.forcing += 2.0 * tau * dot(forcing.value(n), v);
        acc.noise += 2.0 * space.inner_h(&noise, v)?;
        acc.defect_bound += 2.0 * tau * traj.stats[n - 1].residual * dot(v, v).sqrt();
        rows.push(acc);
    }
    Ok(EnergyLedger {
        v0_sq: space.norm_h_sq(&traj.v[0]),
        u0_b_sq: spec.norm_b_sq(&traj.u[0]),
        rows,
    })
}
