use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::noise::{generate_path_indexed, WienerPath};
use crate::operators::ProblemSpec;
use crate::stepper::{integrate, ForcingGrid, SchemeParams, Trajectory};

/// Sample mean with its standard error `s / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, count: n }
    }

    /// Normal-approximation 95% interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.se, self.mean + 1.96 * self.se)
    }
}

/// Path `index` of an ensemble drawn on `generate_steps` steps and summed
/// down to `steps`. Ensembles at different resolutions that share
/// `(generate_steps, seed)` are thereby driven by the same Brownian paths.
pub fn coupled_path(generate_steps: usize, steps: usize, modes: usize, horizon: f64, seed: u64, index: u64) -> Result<WienerPath> {
    if steps == 0 || generate_steps % steps != 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: format!("{steps} does not divide the generation grid {generate_steps}"),
        });
    }
    let fine = generate_path_indexed(generate_steps, modes, horizon, seed, index)?;
    if generate_steps == steps {
        Ok(fine)
    } else {
        fine.coarsen(generate_steps / steps)
    }
}

/// Evaluate `f` on path indices `0..paths` in parallel; results come back
/// in index order.
pub fn run_paths<T, F>(paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..paths as u64).into_par_iter().map(f).collect()
}

/// Per-path quantities monitored by the a priori estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub path: u64,
    /// `|vⁿ|²`, `n = 0..=N`.
    pub v_sq: Vec<f64>,
    /// `|uⁿ|²_B`, `n = 0..=N`.
    pub u_b_sq: Vec<f64>,
    /// `τ Σ_{n≥1} ‖vⁿ‖²_{V_A}`.
    pub va_integral: f64,
    /// `Σ_{n≥1} |uⁿ - uⁿ⁻¹|²_B`.
    pub du_sum: f64,
    /// `|vⁿ|² + |uⁿ|²_B + Σ_{j≤n} |Δuʲ|²_B`, `n = 1..=N`.
    pub apriori_lhs: Vec<f64>,
    /// `|v⁰|² + |u⁰|²_B + 2τ Σ_{j≤n} ⟨fʲ - Avʲ, vʲ⟩ + τ Σ_{j≤n} |C(uʲ, vʲ)|²`.
    pub apriori_rhs: Vec<f64>,
}

impl PathSummary {
    pub fn compute(path: u64, traj: &Trajectory, forcing: &ForcingGrid, spec: &ProblemSpec, params: &SchemeParams) -> Self {
        let space = spec.space();
        let tau = params.tau();
        let steps = traj.steps();
        let v_sq: Vec<f64> = traj.v.iter().map(|v| space.norm_h_sq(v)).collect();
        let u_b_sq: Vec<f64> = traj.u.iter().map(|u| spec.norm_b_sq(u)).collect();
        let base = v_sq[0] + u_b_sq[0];
        let (mut va, mut du, mut work, mut noise) = (0.0, 0.0, 0.0, 0.0);
        let mut lhs = Vec::with_capacity(steps);
        let mut rhs = Vec::with_capacity(steps);
        for n in 1..=steps {
            let (v, u) = (&traj.v[n], &traj.u[n]);
            va += tau * space.norm_grad_sq(v);
            du += spec.norm_b_sq(&(u - &traj.u[n - 1]));
            let av = spec.damping().apply(space, v);
            work += 2.0 * tau * (dot(forcing.value(n), v) - dot(&av, v));
            noise += tau * spec.noise().hs_norm_sq(u, v);
            lhs.push(v_sq[n] + u_b_sq[n] + du);
            rhs.push(base + work + noise);
        }
        Self {
            path,
            v_sq,
            u_b_sq,
            va_integral: va,
            du_sum: du,
            apriori_lhs: lhs,
            apriori_rhs: rhs,
        }
    }

    /// `min_n (rhs - lhs)`.
    pub fn min_margin(&self) -> f64 {
        self.apriori_rhs
            .iter()
            .zip(&self.apriori_lhs)
            .map(|(r, l)| r - l)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub paths: usize,
    pub base_seed: u64,
    pub steps: usize,
    /// `sup_{n≥1} E|vⁿ|²`, with the standard error at the maximizing `n`.
    pub sup_v_sq: MeanSe,
    pub sup_u_b_sq: MeanSe,
    pub va_integral: MeanSe,
    pub du_sum: MeanSe,
    /// Per `n = 1..=N`.
    pub apriori_lhs: Vec<MeanSe>,
    pub apriori_rhs: Vec<MeanSe>,
    /// `rhs - lhs` per path, then averaged.
    pub margin: Vec<MeanSe>,
}

fn sup_over_steps(summaries: &[PathSummary], pick: impl Fn(&PathSummary) -> &[f64]) -> MeanSe {
    let steps = pick(&summaries[0]).len() - 1;
    (1..=steps)
        .map(|n| MeanSe::from_samples(&summaries.iter().map(|s| pick(s)[n]).collect::<Vec<_>>()))
        .fold(None, |best: Option<MeanSe>, x| match best {
            Some(b) if b.mean >= x.mean => Some(b),
            _ => Some(x),
        })
        .expect("at least one step")
}

impl EnsembleStats {
    /// Integrate `paths` coupled paths (see [`coupled_path`]) and summarize.
    /// Any solver failure aborts the ensemble.
    pub fn collect(
        spec: &ProblemSpec,
        params: &SchemeParams,
        forcing: &ForcingGrid,
        paths: usize,
        base_seed: u64,
        generate_steps: usize,
    ) -> Result<(Self, Vec<PathSummary>)> {
        let modes = spec.noise().modes();
        let results = run_paths(paths, |i| {
            let path = coupled_path(generate_steps, params.steps(), modes, params.horizon(), base_seed, i)?;
            let traj = integrate(spec, params, &path, forcing)?;
            Ok(PathSummary::compute(i, &traj, forcing, spec, params))
        });
        let summaries = results.into_iter().collect::<Result<Vec<_>>>()?;
        Ok((Self::from_summaries(&summaries, base_seed)?, summaries))
    }

    pub fn from_summaries(summaries: &[PathSummary], base_seed: u64) -> Result<Self> {
        if summaries.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let steps = summaries[0].apriori_lhs.len();
        let per_step = |f: &dyn Fn(&PathSummary, usize) -> f64| -> Vec<MeanSe> {
            (0..steps)
                .map(|k| MeanSe::from_samples(&summaries.iter().map(|s| f(s, k)).collect::<Vec<_>>()))
                .collect()
        };
        let column = |f: &dyn Fn(&PathSummary) -> f64| MeanSe::from_samples(&summaries.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            paths: summaries.len(),
            base_seed,
            steps,
            sup_v_sq: sup_over_steps(summaries, |s| &s.v_sq),
            sup_u_b_sq: sup_over_steps(summaries, |s| &s.u_b_sq),
            va_integral: column(&|s| s.va_integral),
            du_sum: column(&|s| s.du_sum),
            apriori_lhs: per_step(&|s, k| s.apriori_lhs[k]),
            apriori_rhs: per_step(&|s, k| s.apriori_rhs[k]),
            margin: per_step(&|s, k| s.apriori_rhs[k] - s.apriori_lhs[k]),
        })
    }

    /// `|a - b| / max(|a|, |b|)` for the three quantities monitored under
    /// refinement: `sup E|vⁿ|²`, `E τΣ‖vⁿ‖²_{V_A}`, `E Σ|Δu|²_B`.
    pub fn relative_variation(&self, other: &Self) -> [f64; 3] {
        let rel = |a: f64, b: f64| {
            let s = a.abs().max(b.abs());
            if s == 0.0 {
                0.0
            } else {
                (a - b).abs() / s
            }
        };
        [
            rel(self.sup_v_sq.mean, other.sup_v_sq.mean),
            rel(self.va_integral.mean, other.va_integral.mean),
            rel(self.du_sum.mean, other.du_sum.mean),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriRow {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub margin_se: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriReport {
    pub rows: Vec<AprioriRow>,
    /// Number of standard errors allowed below zero.
    pub band: f64,
}

impl AprioriReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok).count()
    }

    /// Smallest `margin / se` over all steps (`±∞` when `se = 0`).
    pub fn worst_z(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                if r.margin_se > 0.0 {
                    r.margin / r.margin_se
                } else if r.margin >= 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Check the mean a priori margin against `-4` standard errors at every
/// step.
pub fn audit_apriori(stats: &EnsembleStats) -> AprioriReport {
    let band = 4.0;
    let rows = (0..stats.steps)
        .map(|k| {
            let m = stats.margin[k];
            AprioriRow {
                n: k + 1,
                lhs: stats.apriori_lhs[k].mean,
                rhs: stats.apriori_rhs[k].mean,
                margin: m.mean,
                margin_se: m.se,
                ok: m.mean >= -band * m.se,
            }
        })
        .collect();
    AprioriReport { rows, band }
}
