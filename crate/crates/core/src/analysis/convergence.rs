use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ensemble::{run_paths, MeanSe};
use crate::error::{Error, Result};
use crate::mesh::{FemSpace, GalerkinVector};
use crate::noise::generate_path_indexed;
use crate::operators::{ProblemFamily, ProblemSpec};
use crate::stepper::{integrate, ForcingGrid, SchemeParams, SolverSettings, Trajectory};

/// One discretization level: `steps` time steps, `nodes` interior mesh
/// nodes, `modes` noise modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub steps: usize,
    pub nodes: usize,
    pub modes: usize,
}

/// Closed-form solutions usable as an exact reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactSolution {
    /// `u = sin(πt) sin(πx)`, driven by `Forcing::manufactured`.
    Manufactured,
}

impl ExactSolution {
    pub fn displacement(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::Manufactured => (PI * t).sin() * (PI * x).sin(),
        }
    }

    pub fn velocity(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::Manufactured => PI * (PI * t).cos() * (PI * x).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The last (finest) level on the same coupled path.
    Finest,
    Exact(ExactSolution),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelErrors {
    pub level: Level,
    /// `E|v_ℓ(T) - v_ref(T)|²`
    pub v_final: MeanSe,
    /// `E|u_ℓ(T) - u_ref(T)|²_B`
    pub u_final: MeanSe,
    /// `E ∫₀ᵀ ‖v_ℓ - v_ref‖²_{V_A} dt`
    pub v_va: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub path: u64,
    pub level: Level,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub reference: Reference,
    pub levels: Vec<Level>,
    /// One row per compared level (all but the finest when the reference
    /// is the finest level).
    pub rows: Vec<LevelErrors>,
    pub paths: usize,
    pub base_seed: u64,
    pub failures: Vec<PathFailure>,
}

fn strictly_decreasing(xs: impl Iterator<Item = f64>) -> bool {
    let xs: Vec<f64> = xs.collect();
    xs.windows(2).all(|w| w[1] < w[0])
}

impl ConvergenceReport {
    pub fn v_final_decreasing(&self) -> bool {
        strictly_decreasing(self.rows.iter().map(|r| r.v_final.mean))
    }

    pub fn u_final_decreasing(&self) -> bool {
        strictly_decreasing(self.rows.iter().map(|r| r.u_final.mean))
    }

    pub fn v_va_decreasing(&self) -> bool {
        strictly_decreasing(self.rows.iter().map(|r| r.v_va.mean))
    }
}

fn validate(levels: &[Level], reference: Reference) -> Result<()> {
    let bad = |reason: String| Error::InvalidParameter { name: "levels", reason };
    let min = if reference == Reference::Finest { 2 } else { 1 };
    if levels.len() < min {
        return Err(bad(format!("need at least {min} levels")));
    }
    for l in levels {
        if l.steps == 0 || l.nodes == 0 || l.modes == 0 {
            return Err(bad(format!("level {l:?} has a zero entry")));
        }
    }
    for w in levels.windows(2) {
        let (c, f) = (w[0], w[1]);
        let refines = f.steps > c.steps
            && f.steps % c.steps == 0
            && f.nodes > c.nodes
            && (f.nodes + 1) % (c.nodes + 1) == 0
            && f.modes >= c.modes;
        if !refines {
            return Err(bad(format!("{f:?} does not refine {c:?}")));
        }
    }
    Ok(())
}

struct Prepared {
    level: Level,
    spec: ProblemSpec,
    params: SchemeParams,
    forcing: ForcingGrid,
}

fn prolong_all(space: &FemSpace, xs: &[GalerkinVector], fine: &FemSpace) -> Result<Vec<GalerkinVector>> {
    xs.iter().map(|x| space.prolongate(x, fine)).collect()
}

/// Errors of one level against the reference trajectory, computed on the
/// reference mesh after nodal prolongation. The time integral is exact
/// over the reference's time cells.
fn errors_against(level: &Prepared, traj: &Trajectory, reference: &Prepared, ref_traj: &Trajectory) -> Result<[f64; 3]> {
    let fine = reference.spec.space();
    let v = prolong_all(level.spec.space(), &traj.v, fine)?;
    let n = level.params.steps();
    let nf = reference.params.steps();
    let ratio = nf / n;
    let u_t = level.spec.space().prolongate(&traj.u[n], fine)?;
    let dv = &v[n] - &ref_traj.v[nf];
    let du = &u_t - &ref_traj.u[nf];
    let tau_f = reference.params.tau();
    let va: f64 = (1..=nf)
        .map(|k| tau_f * fine.norm_grad_sq(&(&v[k.div_ceil(ratio)] - &ref_traj.v[k])))
        .sum();
    Ok([fine.norm_h_sq(&dv), reference.spec.norm_b_sq(&du), va])
}

fn errors_exact(level: &Prepared, traj: &Trajectory, exact: ExactSolution) -> [f64; 3] {
    let space = level.spec.space();
    let n = level.params.steps();
    let tau = level.params.tau();
    let t_end = level.params.horizon();
    let v_ex = space.interpolate(|x| exact.velocity(t_end, x));
    let u_ex = space.interpolate(|x| exact.displacement(t_end, x));
    let va: f64 = (1..=n)
        .map(|k| {
            let ex = space.interpolate(|x| exact.velocity(k as f64 * tau, x));
            tau * space.norm_grad_sq(&(&traj.v[k] - &ex))
        })
        .sum();
    [
        space.norm_h_sq(&(&traj.v[n] - &v_ex)),
        level.spec.norm_b_sq(&(&traj.u[n] - &u_ex)),
        va,
    ]
}

/// Strong errors over coupled paths. Each path is drawn on the finest time
/// grid with the finest mode count, then summed and truncated down to each
/// level. Initial data are interpolated onto each mesh.
///
/// Against [`Reference::Finest`] the errors are measured on the finest
/// mesh; against [`Reference::Exact`] on each level's own mesh against the
/// nodal interpolant of the exact solution, with the time integral
/// evaluated at grid times.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    family: &ProblemFamily,
    horizon: f64,
    levels: &[Level],
    reference: Reference,
    solver: SolverSettings,
    paths: usize,
    base_seed: u64,
    gate: bool,
) -> Result<ConvergenceReport> {
    validate(levels, reference)?;
    if paths == 0 {
        return Err(Error::InvalidParameter {
            name: "paths",
            reason: "must be at least 1".into(),
        });
    }
    let prepared = levels
        .iter()
        .map(|&level| {
            let fam = ProblemFamily {
                modes: level.modes,
                ..family.clone()
            };
            let spec = fam.instantiate_in(Arc::new(FemSpace::new(level.nodes)?))?;
            let params = if gate {
                SchemeParams::new(&spec, level.steps, horizon, solver)?
            } else {
                SchemeParams::ungated(level.steps, horizon, solver)?
            };
            let forcing = ForcingGrid::for_spec(&spec, &params);
            Ok(Prepared {
                level,
                spec,
                params,
                forcing,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let finest = prepared.last().expect("validated").level;
    let compared = match reference {
        Reference::Finest => &prepared[..prepared.len() - 1],
        Reference::Exact(_) => &prepared[..],
    };

    let per_path = run_paths(paths, |i| -> std::result::Result<Vec<[f64; 3]>, PathFailure> {
        let fail = |level: Level, e: Error| PathFailure {
            path: i,
            level,
            message: e.to_string(),
        };
        let fine_path =
            generate_path_indexed(finest.steps, finest.modes, horizon, base_seed, i).map_err(|e| fail(finest, e))?;
        let run = |p: &Prepared| -> Result<Trajectory> {
            let path = fine_path.coarsen(finest.steps / p.level.steps)?.truncate(p.level.modes)?;
            integrate(&p.spec, &p.params, &path, &p.forcing)
        };
        match reference {
            Reference::Finest => {
                let top = prepared.last().expect("validated");
                let ref_traj = run(top).map_err(|e| fail(top.level, e))?;
                compared
                    .iter()
                    .map(|p| {
                        let traj = run(p).map_err(|e| fail(p.level, e))?;
                        errors_against(p, &traj, top, &ref_traj).map_err(|e| fail(p.level, e))
                    })
                    .collect()
            }
            Reference::Exact(exact) => compared
                .iter()
                .map(|p| run(p).map(|traj| errors_exact(p, &traj, exact)).map_err(|e| fail(p.level, e)))
                .collect(),
        }
    });

    let mut failures = Vec::new();
    let mut samples: Vec<[Vec<f64>; 3]> = vec![[Vec::new(), Vec::new(), Vec::new()]; compared.len()];
    for r in per_path {
        match r {
            Ok(errs) => {
                for (slot, e) in samples.iter_mut().zip(errs) {
                    for q in 0..3 {
                        slot[q].push(e[q]);
                    }
                }
            }
            Err(f) => failures.push(f),
        }
    }
    let rows = compared
        .iter()
        .zip(&samples)
        .map(|(p, s)| LevelErrors {
            level: p.level,
            v_final: MeanSe::from_samples(&s[0]),
            u_final: MeanSe::from_samples(&s[1]),
            v_va: MeanSe::from_samples(&s[2]),
        })
        .collect();
    Ok(ConvergenceReport {
        reference,
        levels: levels.to_vec(),
        rows,
        paths,
        base_seed,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{DampingChoice, Forcing, InitialData, NoiseParams};

    fn levels() -> Vec<Level> {
        vec![
            Level { steps: 8, nodes: 7, modes: 2 },
            Level { steps: 16, nodes: 15, modes: 2 },
            Level { steps: 32, nodes: 31, modes: 2 },
        ]
    }

    fn family() -> ProblemFamily {
        ProblemFamily {
            damping: DampingChoice::Rho,
            b: 1.0,
            noise: NoiseParams {
                alpha: 1.0,
                beta: 0.5,
                gamma: 1.0,
                decay: 1.0,
            },
            modes: 2,
            forcing: Forcing::zero(),
            initial_u: InitialData::Sine { amplitude: 1.0, mode: 1 },
            initial_v: InitialData::Zero,
        }
    }

    #[test]
    fn rejects_non_nested_levels() {
        let mut l = levels();
        l[1].nodes = 14;
        let err = convergence_study(&family(), 1.0, &l, Reference::Finest, SolverSettings::default(), 2, 0, true);
        assert!(err.is_err());
        assert!(convergence_study(&family(), 1.0, &l[..1], Reference::Finest, SolverSettings::default(), 2, 0, true).is_err());
    }

    #[test]
    fn zero_problem_has_zero_errors() {
        let fam = ProblemFamily {
            noise: NoiseParams {
                gamma: 0.0,
                ..family().noise
            },
            initial_u: InitialData::Zero,
            ..family()
        };
        let r = convergence_study(&fam, 1.0, &levels(), Reference::Finest, SolverSettings::default(), 4, 1, true).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!((row.v_final.mean, row.u_final.mean, row.v_va.mean), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn reproducible() {
        let run = || convergence_study(&family(), 1.0, &levels(), Reference::Finest, SolverSettings::default(), 6, 3, true).unwrap();
        assert_eq!(run(), run());
    }
}
