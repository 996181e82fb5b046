use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::mesh::GalerkinVector;
use crate::noise::WienerPath;
use crate::operators::ProblemSpec;
use crate::stepper::{integrate, integrate_with_guess, ForcingGrid, SchemeParams, SolverStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// `max_n |v₁ⁿ - v₂ⁿ|`
    pub max_dv: f64,
    /// `max_n |u₁ⁿ - u₂ⁿ|_B`
    pub max_du_b: f64,
}

/// Integrate twice on the same data: once warm-started Newton-first, once
/// from randomly perturbed initial guesses with the solver order swapped
/// (Picard warm-up, then Newton). Returns the largest discrepancy.
/// `perturbation` scales the guess offsets; zero reproduces the first run's
/// guesses.
pub fn uniqueness_experiment(
    spec: &ProblemSpec,
    params: &SchemeParams,
    path: &WienerPath,
    forcing: &ForcingGrid,
    perturbation: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    let first = integrate(spec, params, path, forcing)?;
    let alt = match params.solver().strategy {
        SolverStrategy::NewtonFirst => SolverStrategy::PicardWarmup { iterations: 3 },
        _ => SolverStrategy::NewtonFirst,
    };
    let twin_params = params.clone().with_strategy(alt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let second = integrate_with_guess(spec, &twin_params, path, forcing, |_, v_prev| {
        let mut g = v_prev.clone();
        if perturbation != 0.0 {
            for x in g.iter_mut() {
                *x += perturbation * rng.random_range(-1.0..1.0);
            }
        }
        g
    })?;
    let space = spec.space();
    let mut report = UniquenessReport {
        max_dv: 0.0,
        max_du_b: 0.0,
    };
    for n in 0..first.v.len() {
        let dv: GalerkinVector = &first.v[n] - &second.v[n];
        let du: GalerkinVector = &first.u[n] - &second.u[n];
        report.max_dv = report.max_dv.max(space.norm_h_sq(&dv).sqrt());
        report.max_du_b = report.max_du_b.max(spec.norm_b_sq(&du).sqrt());
    }
    Ok(report)
}
