//! The fully discrete scheme: for `n = 1..=N` find `vⁿ ∈ V_m` with
//!
//! ```text
//! (vⁿ - vⁿ⁻¹)/τ + A vⁿ + B(uⁿ⁻¹ + τ vⁿ) = fⁿ + C(uⁿ⁻¹, vⁿ⁻¹) ΔWⁿ / τ
//! ```
//!
//! tested against every basis function, then set `uⁿ = uⁿ⁻¹ + τ vⁿ`.
//!
//! Each step is solved by semismooth Newton globalized by a line search on
//! the step energy, falling back to a preconditioned Picard iteration if
//! Newton stalls. Convergence is measured in the coefficient 2-norm of the
//! mass-weighted residual `R`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, SymTridiag};
use crate::mesh::{FemSpace, GalerkinVector};
use crate::noise::WienerPath;
use crate::operators::{Forcing, ProblemSpec};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Order in which the step solver tries its two iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverStrategy {
    /// Newton, Picard only if Newton stalls.
    #[default]
    NewtonFirst,
    /// `iterations` Picard sweeps, then Newton.
    PicardWarmup { iterations: usize },
    /// Picard only.
    PicardOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Relaxation `ω` of the Picard fallback.
    #[serde(default = "default_relaxation")]
    pub relaxation: f64,
    #[serde(default)]
    pub strategy: SolverStrategy,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iters() -> usize {
    100
}

fn default_relaxation() -> f64 {
    1.0
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iters: default_max_iters(),
            relaxation: default_relaxation(),
            strategy: SolverStrategy::default(),
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("must be positive, got {}", self.tol),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "relaxation",
                reason: format!("must lie in (0, 1], got {}", self.relaxation),
            });
        }
        Ok(())
    }
}

/// Uniform time grid plus solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    steps: usize,
    tau: f64,
    horizon: f64,
    solver: SolverSettings,
}

impl SchemeParams {
    /// Fails with [`Error::StepGate`] unless `λ τ < 1`.
    pub fn new(spec: &ProblemSpec, steps: usize, horizon: f64, solver: SolverSettings) -> Result<Self> {
        let p = Self::ungated(steps, horizon, solver)?;
        let lambda_tau = spec.lambda() * p.tau;
        if !(lambda_tau < 1.0) {
            return Err(Error::StepGate { lambda_tau });
        }
        Ok(p)
    }

    /// No step-size gate. Only for demonstrating failure modes.
    pub fn ungated(steps: usize, horizon: f64, solver: SolverSettings) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter {
                name: "steps",
                reason: "must be at least 1".into(),
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be positive and finite, got {horizon}"),
            });
        }
        solver.validate()?;
        Ok(Self {
            steps,
            tau: horizon / steps as f64,
            horizon,
            solver,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn solver(&self) -> &SolverSettings {
        &self.solver
    }

    pub fn with_solver(mut self, solver: SolverSettings) -> Result<Self> {
        solver.validate()?;
        self.solver = solver;
        Ok(self)
    }

    pub fn with_strategy(mut self, strategy: SolverStrategy) -> Self {
        self.solver.strategy = strategy;
        self
    }

    /// `t_n = n τ`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }
}

/// Time-averaged loads `fⁿ = (1/τ) ∫_{t_{n-1}}^{t_n} ⟨f(t), φ_i⟩ dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingGrid {
    values: Vec<GalerkinVector>,
}

impl ForcingGrid {
    pub fn assemble(forcing: &Forcing, space: &FemSpace, params: &SchemeParams) -> Self {
        let values = (1..=params.steps())
            .map(|n| forcing.averaged_load(space, params.time(n - 1), params.time(n)))
            .collect();
        Self { values }
    }

    pub fn for_spec(spec: &ProblemSpec, params: &SchemeParams) -> Self {
        Self::assemble(spec.forcing(), spec.space(), params)
    }

    pub fn zero(dim: usize, steps: usize) -> Self {
        Self {
            values: vec![GalerkinVector::zeros(dim); steps],
        }
    }

    pub fn from_values(values: Vec<GalerkinVector>) -> Self {
        Self { values }
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    /// `fⁿ` for `n` in `1..=steps`.
    pub fn value(&self, n: usize) -> &GalerkinVector {
        &self.values[n - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub newton_iters: usize,
    pub picard_iters: usize,
    /// Final residual norm.
    pub residual: f64,
    pub fell_back: bool,
    /// Accepted above `tol` because the residual sat at its rounding floor.
    #[serde(default)]
    pub at_floor: bool,
}

impl SolveStats {
    pub fn iterations(&self) -> usize {
        self.newton_iters + self.picard_iters
    }
}

/// State entering step n.
#[derive(Debug, Clone, Copy)]
pub struct StepState<'a> {
    pub v_prev: &'a [f64],
    pub u_prev: &'a [f64],
}

/// Residual of the step equation at `v`, as dual coefficients.
/// `noise` is the H-valued vector `C(uⁿ⁻¹, vⁿ⁻¹) ΔWⁿ`.
pub fn step_residual(
    v: &[f64],
    state: StepState<'_>,
    forcing: &[f64],
    noise: &[f64],
    spec: &ProblemSpec,
    tau: f64,
) -> Result<GalerkinVector> {
    let space = spec.space();
    let m = space.dim();
    for len in [v.len(), state.v_prev.len(), state.u_prev.len(), forcing.len(), noise.len()] {
        check_dim(m, len)?;
    }
    Ok(residual_unchecked(v, state, forcing, noise, spec, tau))
}

fn residual_unchecked(
    v: &[f64],
    state: StepState<'_>,
    forcing: &[f64],
    noise: &[f64],
    spec: &ProblemSpec,
    tau: f64,
) -> GalerkinVector {
    let space = spec.space();
    let m = v.len();
    let inertia: Vec<f64> = (0..m).map(|i| (v[i] - state.v_prev[i] - noise[i]) / tau).collect();
    let displacement: Vec<f64> = (0..m).map(|i| state.u_prev[i] + tau * v[i]).collect();
    let mut r = space.mass().mul_vec(&inertia);
    let a = spec.damping().apply(space, v);
    let b = spec.elastic().apply(space, &displacement);
    for i in 0..m {
        r[i] += a[i] + b[i] - forcing[i];
    }
    r.into()
}

fn residual_norm(r: &[f64]) -> f64 {
    if r.iter().all(|x| x.is_finite()) {
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        f64::INFINITY
    }
}

struct StepProblem<'a> {
    spec: &'a ProblemSpec,
    state: StepState<'a>,
    forcing: &'a [f64],
    noise: &'a [f64],
    tau: f64,
    // M/τ + τB, shared by the Newton Jacobian and the Picard preconditioner
    base: SymTridiag,
}

impl StepProblem<'_> {
    fn residual(&self, v: &[f64]) -> (GalerkinVector, f64) {
        let r = residual_unchecked(v, self.state, self.forcing, self.noise, self.spec, self.tau);
        let norm = residual_norm(&r);
        (r, norm)
    }

    /// Strictly convex functional whose gradient is the residual, with the
    /// sum of its terms' magnitudes:
    /// `|v - vⁿ⁻¹ - noise|²_M / 2τ + Ψ(v) + |τv + uⁿ⁻¹|²_B / 2τ - ⟨f, v⟩`.
    fn energy(&self, v: &[f64]) -> (f64, f64) {
        let space = self.spec.space();
        let m = v.len();
        let inertia: Vec<f64> = (0..m).map(|i| v[i] - self.state.v_prev[i] - self.noise[i]).collect();
        let displacement: Vec<f64> = (0..m).map(|i| self.state.u_prev[i] + self.tau * v[i]).collect();
        let terms = [
            space.mass().bilinear(&inertia, &inertia) / (2.0 * self.tau),
            self.spec.damping().potential(space, v),
            self.spec.norm_b_sq(&displacement) / (2.0 * self.tau),
            -dot(self.forcing, v),
        ];
        (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
    }
}

struct Iterate {
    v: GalerkinVector,
    r: GalerkinVector,
    norm: f64,
    history: Vec<f64>,
    stats: SolveStats,
}

/// Backtracking along `v - t dir` from `t = t0`, at most `trials` tries. A step is accepted on
/// Armijo decrease of the step energy, or on a sufficient decrease of
/// the residual norm that leaves the energy unchanged up to rounding;
/// the second test takes over once energy differences drop below
/// rounding. Returns `false` if no step is accepted.
fn try_step(p: &StepProblem<'_>, it: &mut Iterate, dir: &[f64], t0: f64, trials: usize) -> bool {
    let (phi, scale) = p.energy(&it.v);
    let slope = -dot(&it.r, dir);
    let slack = 64.0 * f64::EPSILON * scale;
    let mut t = t0;
    for _ in 0..trials {
        let trial: GalerkinVector = it.v.iter().zip(dir).map(|(v, d)| v - t * d).collect::<Vec<_>>().into();
        let (r, norm) = p.residual(&trial);
        let (phi_t, _) = p.energy(&trial);
        let armijo = phi_t <= phi + ARMIJO * t * slope;
        let residual_drop = norm <= (1.0 - ARMIJO * t) * it.norm && phi_t <= phi + slack;
        if norm.is_finite() && (armijo || residual_drop) {
            it.v = trial;
            it.r = r;
            it.norm = norm;
            it.history.push(norm);
            return true;
        }
        t *= 0.5;
    }
    false
}

/// Size of the residual change caused by perturbing `v` at the level of its
/// own rounding error. Near a zero gradient the square-root branch of the
/// damping flux amplifies this well above `ε`, so a tolerance below it can
/// not be met in floating point.
fn rounding_floor(p: &StepProblem<'_>, v: &[f64], r: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let delta = 4.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let patterns: [fn(usize) -> f64; 4] = [
        |_| 1.0,
        |_| -1.0,
        |i| if i % 2 == 0 { 1.0 } else { -1.0 },
        |i| if i % 4 < 2 { 1.0 } else { -1.0 },
    ];
    let mut floor = 0.0f64;
    for sign in patterns {
        let shifted: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + sign(i) * delta).collect();
        let (rs, _) = p.residual(&shifted);
        floor = floor.max(residual_norm(&rs.iter().zip(r).map(|(a, b)| a - b).collect::<Vec<_>>()));
    }
    4.0 * floor
}

/// `v - t dir` with its residual.
fn trial_point(p: &StepProblem<'_>, v: &[f64], dir: &[f64], t: f64) -> (GalerkinVector, GalerkinVector, f64) {
    let trial: GalerkinVector = v.iter().zip(dir).map(|(v, d)| v - t * d).collect::<Vec<_>>().into();
    let (r, norm) = p.residual(&trial);
    (trial, r, norm)
}

/// Minimize the (convex) step energy along `v - t dir` by bracketing and
/// bisection on its derivative `-R(v - t dir)·dir`, which is nondecreasing
/// in `t`. Accepts the minimizer if it lowers the energy or, once energy
/// differences are below rounding, the residual norm.
fn exact_line_search(p: &StepProblem<'_>, it: &mut Iterate, dir: &[f64]) -> bool {
    let slope = |r: &[f64]| -dot(r, dir);
    let d0 = slope(&it.r);
    if !(d0 < 0.0) {
        return false;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..8 {
        let (_, r, _) = trial_point(p, &it.v, dir, hi);
        let d = slope(&r);
        if !d.is_finite() || d >= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (_, r, _) = trial_point(p, &it.v, dir, mid);
        let d = slope(&r);
        if d.is_finite() && d < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi || (d.is_finite() && d.abs() <= 1e-6 * d0.abs()) {
            break;
        }
    }
    let t = if lo > 0.0 { lo } else { 0.5 * hi };
    let (phi, scale) = p.energy(&it.v);
    let (trial, r, norm) = trial_point(p, &it.v, dir, t);
    let (phi_t, _) = p.energy(&trial);
    // Energy comparisons are trusted only while the predicted decrease is
    // well above rounding; close to the root the residual norm decides.
    let slack = 64.0 * f64::EPSILON * scale;
    let progress = if -t * d0 > 1e3 * slack {
        phi_t < phi
    } else {
        phi_t <= phi + slack && norm < it.norm
    };
    if norm.is_finite() && progress {
        it.v = trial;
        it.r = r;
        it.norm = norm;
        it.history.push(norm);
        return true;
    }
    false
}

/// Semismooth Newton until converged, out of budget or stalled. A full
/// step is taken when it at least halves the residual norm; otherwise the
/// step length minimizes the step energy along the Newton direction.
fn newton(p: &StepProblem<'_>, it: &mut Iterate, budget: usize, tol: f64) -> Result<()> {
    let space = p.spec.space();
    let mut best = (it.v.clone(), it.r.clone(), it.norm);
    let result = (|| {
        for _ in 0..budget {
            if it.norm <= tol {
                return Ok(());
            }
            let jac = p.base.add_scaled(1.0, &p.spec.damping().jacobian(space, &it.v));
            let delta = jac.solve(&it.r)?;
            it.stats.newton_iters += 1;
            let (trial, r, norm) = trial_point(p, &it.v, &delta, 1.0);
            if norm <= 0.5 * it.norm {
                it.v = trial;
                it.r = r;
                it.norm = norm;
                it.history.push(norm);
            } else if !exact_line_search(p, it, &delta) && !try_step(p, it, &delta, 1.0, MAX_BACKTRACKS) {
                return Ok(());
            }
            if it.norm < best.2 {
                best = (it.v.clone(), it.r.clone(), it.norm);
            }
        }
        Ok(())
    })();
    // the energy line search may trade residual for energy; keep the best point
    if best.2 < it.norm {
        (it.v, it.r, it.norm) = best;
    }
    result
}

/// Preconditioned fixed-point sweeps `v ← v - ω P⁻¹ R(v)` with
/// `P = M/τ + τB + c K`, `c` the damping operator's reference slope, and
/// `ω` reduced by the same line search as Newton when needed.
fn picard(p: &StepProblem<'_>, it: &mut Iterate, budget: usize, tol: f64, omega: f64) -> Result<()> {
    let space = p.spec.space();
    let precond = p
        .base
        .add_scaled(p.spec.damping().reference_slope(), space.stiffness())
        .factor()?;
    for _ in 0..budget {
        if it.norm <= tol || !it.norm.is_finite() {
            return Ok(());
        }
        let delta = precond.solve(&it.r);
        it.stats.picard_iters += 1;
        if !try_step(p, it, &delta, omega, MAX_BACKTRACKS) {
            return Ok(());
        }
    }
    Ok(())
}

/// Solve one step. `step` is only used to label errors.
#[allow(clippy::too_many_arguments)]
pub fn solve_step(
    step: usize,
    state: StepState<'_>,
    forcing: &[f64],
    noise: &[f64],
    spec: &ProblemSpec,
    params: &SchemeParams,
    initial_guess: &[f64],
) -> Result<(GalerkinVector, SolveStats)> {
    let space = spec.space();
    let m = space.dim();
    for len in [state.v_prev.len(), state.u_prev.len(), forcing.len(), noise.len(), initial_guess.len()] {
        check_dim(m, len)?;
    }
    let tau = params.tau();
    let b = spec.elastic().coefficient();
    let problem = StepProblem {
        spec,
        state,
        forcing,
        noise,
        tau,
        base: space.mass().scaled(1.0 / tau).add_scaled(tau * b, space.stiffness()),
    };
    let v0 = GalerkinVector::from_vec(initial_guess.to_vec());
    let (r0, norm0) = problem.residual(&v0);
    let mut it = Iterate {
        v: v0,
        r: r0,
        norm: norm0,
        history: vec![norm0],
        stats: SolveStats::default(),
    };
    let s = params.solver();
    let fail = |it: Iterate| Error::NonConvergence {
        step,
        iterations: it.stats.iterations(),
        residual: it.norm,
        history: it.history,
    };
    if !it.norm.is_finite() {
        return Err(fail(it));
    }
    match s.strategy {
        SolverStrategy::NewtonFirst => {
            newton(&problem, &mut it, s.max_iters, s.tol)?;
        }
        SolverStrategy::PicardWarmup { iterations } => {
            picard(&problem, &mut it, iterations.min(s.max_iters), s.tol, s.relaxation)?;
            if it.norm.is_finite() {
                newton(&problem, &mut it, s.max_iters, s.tol)?;
            }
        }
        SolverStrategy::PicardOnly => {}
    }
    if it.norm > s.tol && it.norm.is_finite() && it.norm <= rounding_floor(&problem, &it.v, &it.r) {
        it.stats.at_floor = true;
    } else if it.norm > s.tol && it.norm.is_finite() {
        it.stats.fell_back = s.strategy != SolverStrategy::PicardOnly;
        picard(&problem, &mut it, s.max_iters, s.tol, s.relaxation)?;
    }
    if !(it.norm <= s.tol || it.stats.at_floor) {
        return Err(fail(it));
    }
    it.stats.residual = it.norm;
    Ok((it.v, it.stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `v⁰ … v^N`.
    pub v: Vec<GalerkinVector>,
    /// `u⁰ … u^N`.
    pub u: Vec<GalerkinVector>,
    /// Per-step solver statistics; entry `n - 1` belongs to step `n`.
    pub stats: Vec<SolveStats>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.stats.len()
    }

    /// `max_n |uⁿ - (u⁰ + τ Σ_{k≤n} vᵏ)|_∞`.
    pub fn displacement_drift(&self, tau: f64) -> f64 {
        let mut worst = 0.0f64;
        for n in 1..self.u.len() {
            for i in 0..self.u[0].len() {
                let direct = self.u[0][i] + tau * (1..=n).map(|k| self.v[k][i]).sum::<f64>();
                worst = worst.max((self.u[n][i] - direct).abs());
            }
        }
        worst
    }
}

/// `C(uⁿ⁻¹, vⁿ⁻¹) ΔWⁿ` for step `n`.
pub fn noise_term(spec: &ProblemSpec, path: &WienerPath, n: usize, u_prev: &[f64], v_prev: &[f64]) -> Result<GalerkinVector> {
    let dw = path.increment(n);
    if spec.noise().is_zero() || dw.iter().all(|&x| x == 0.0) {
        return Ok(GalerkinVector::zeros(u_prev.len()));
    }
    spec.noise().combine(u_prev, v_prev, dw)
}

/// Run the scheme, warm-starting every step at `vⁿ⁻¹`.
pub fn integrate(spec: &ProblemSpec, params: &SchemeParams, path: &WienerPath, forcing: &ForcingGrid) -> Result<Trajectory> {
    integrate_with_guess(spec, params, path, forcing, |_, v_prev| v_prev.clone())
}

/// As [`integrate`], with the initial guess of step `n` given by
/// `guess(n, vⁿ⁻¹)`.
pub fn integrate_with_guess<G>(
    spec: &ProblemSpec,
    params: &SchemeParams,
    path: &WienerPath,
    forcing: &ForcingGrid,
    mut guess: G,
) -> Result<Trajectory>
where
    G: FnMut(usize, &GalerkinVector) -> GalerkinVector,
{
    let n_steps = params.steps();
    check_dim(n_steps, path.steps())?;
    check_dim(n_steps, forcing.steps())?;
    if (path.tau() - params.tau()).abs() > 1e-12 * params.tau() {
        return Err(Error::InvalidParameter {
            name: "path",
            reason: format!("path step {} differs from scheme step {}", path.tau(), params.tau()),
        });
    }
    let mut v = Vec::with_capacity(n_steps + 1);
    let mut u = Vec::with_capacity(n_steps + 1);
    let mut stats = Vec::with_capacity(n_steps);
    v.push(spec.initial_v().clone());
    u.push(spec.initial_u().clone());
    let tau = params.tau();
    for n in 1..=n_steps {
        let (v_prev, u_prev) = (&v[n - 1], &u[n - 1]);
        let noise = noise_term(spec, path, n, u_prev, v_prev)?;
        let state = StepState { v_prev, u_prev };
        let g = guess(n, v_prev);
        let (vn, st) = solve_step(n, state, forcing.value(n), &noise, spec, params, &g)?;
        let mut un = u_prev.clone();
        un.axpy(tau, &vn);
        v.push(vn);
        u.push(un);
        stats.push(st);
    }
    Ok(Trajectory { v, u, stats })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::linalg::SymTridiag;
    use crate::mesh::{FemMatrices, Mesh1D};
    use crate::noise::{generate_path, generate_path_indexed};
    use crate::operators::{
        DampingChoice, ElasticOperator, InitialData, LinearDamping, NoiseOperator, NoiseParams, ProblemFamily,
    };

    pub(crate) fn surrogate() -> ProblemSpec {
        let mats = FemMatrices {
            mass: SymTridiag::identity(1).unwrap(),
            stiffness: SymTridiag::identity(1).unwrap(),
        };
        let space = Arc::new(FemSpace::with_matrices(Mesh1D::new(1).unwrap(), mats).unwrap());
        let elastic = ElasticOperator::new(1.0).unwrap();
        let noise = NoiseOperator::new(&space, NoiseParams::zero(), 1, &elastic).unwrap();
        ProblemSpec::new(
            space,
            Arc::new(LinearDamping::new(1.0).unwrap()),
            elastic,
            noise,
            Forcing::zero(),
            vec![0.0].into(),
            vec![1.0].into(),
        )
        .unwrap()
    }

    fn nonlinear_family() -> ProblemFamily {
        ProblemFamily {
            damping: DampingChoice::Rho,
            b: 1.0,
            noise: NoiseParams {
                alpha: 1.0,
                beta: 0.5,
                gamma: 1.0,
                decay: 1.0,
            },
            modes: 4,
            forcing: Forcing::zero(),
            initial_u: InitialData::Sine { amplitude: 1.0, mode: 1 },
            initial_v: InitialData::Zero,
        }
    }

    #[test]
    fn surrogate_residual_vanishes_at_four_sevenths() {
        let spec = surrogate();
        let state = StepState {
            v_prev: &[1.0],
            u_prev: &[0.0],
        };
        let r = step_residual(&[4.0 / 7.0], state, &[0.0], &[0.0], &spec, 0.5).unwrap();
        assert!(r[0].abs() < 1e-15, "{}", r[0]);
    }

    #[test]
    fn surrogate_first_step() {
        let spec = surrogate();
        let params = SchemeParams::new(&spec, 1, 0.5, SolverSettings::default()).unwrap();
        let path = generate_path(1, 1, 0.5, 0).unwrap();
        let traj = integrate(&spec, &params, &path, &ForcingGrid::zero(1, 1)).unwrap();
        assert!((traj.v[1][0] - 4.0 / 7.0).abs() < 1e-15);
        assert!((traj.u[1][0] - 2.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn residual_is_affine_in_forcing() {
        let spec = nonlinear_family().instantiate(7).unwrap();
        let m = 7;
        let v: Vec<f64> = (0..m).map(|i| (i as f64 * 0.7).sin()).collect();
        let vp: Vec<f64> = (0..m).map(|i| (i as f64 * 0.3).cos()).collect();
        let up = vec![0.1; m];
        let f1: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let f2: Vec<f64> = (0..m).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let f12: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let z = vec![0.0; m];
        let state = StepState { v_prev: &vp, u_prev: &up };
        let r1 = step_residual(&v, state, &f1, &z, &spec, 0.1).unwrap();
        let r12 = step_residual(&v, state, &f12, &z, &spec, 0.1).unwrap();
        for i in 0..m {
            assert!((r12[i] - (r1[i] - f2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_point_with_zero_operators() {
        let spec = nonlinear_family().instantiate(5).unwrap();
        // zero velocity and displacement: A(0) = 0, B(0) = 0
        let z = vec![0.0; 5];
        let r = step_residual(&z, StepState { v_prev: &z, u_prev: &z }, &z, &z, &spec, 0.1).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut fam = nonlinear_family();
        fam.noise.gamma = 0.0;
        fam.initial_u = InitialData::Zero;
        let spec = fam.instantiate(15).unwrap();
        let params = SchemeParams::new(&spec, 16, 1.0, SolverSettings::default()).unwrap();
        let path = generate_path(16, 4, 1.0, 3).unwrap();
        let traj = integrate(&spec, &params, &path, &ForcingGrid::for_spec(&spec, &params)).unwrap();
        assert!(traj.v.iter().chain(&traj.u).all(|x| x.iter().all(|&c| c == 0.0)));
    }

    #[test]
    fn gate_rejects_large_steps() {
        let spec = nonlinear_family().instantiate(7).unwrap();
        let lambda = spec.lambda();
        assert!(lambda > 1.0);
        let err = SchemeParams::new(&spec, 1, 1.0, SolverSettings::default()).unwrap_err();
        assert!(matches!(err, Error::StepGate { .. }));
        assert!(SchemeParams::ungated(1, 1.0, SolverSettings::default()).is_ok());
    }

    #[test]
    fn solution_independent_of_initial_guess() {
        let spec = nonlinear_family().instantiate(31).unwrap();
        let params = SchemeParams::new(&spec, 32, 1.0, SolverSettings::default()).unwrap();
        let tol = params.solver().tol;
        let m = spec.space().dim();
        let vp: Vec<f64> = (0..m).map(|i| (0.4 * i as f64).sin()).collect();
        let up = spec.initial_u().to_vec();
        let noise: Vec<f64> = (0..m).map(|i| 0.01 * (i as f64).cos()).collect();
        let f = vec![0.0; m];
        let state = StepState { v_prev: &vp, u_prev: &up };
        let far: Vec<f64> = (0..m).map(|i| 1e3 * ((i * 7919 % 13) as f64 - 6.0)).collect();
        let (a, _) = solve_step(2, state, &f, &noise, &spec, &params, &vec![0.0; m]).unwrap();
        let (b, _) = solve_step(2, state, &f, &noise, &spec, &params, &far).unwrap();
        let d = spec.norm_h_sq(&(&a - &b)).sqrt();
        assert!(d <= 2.0 * tol, "{d}");
    }

    #[test]
    fn future_increments_do_not_affect_the_past() {
        let spec = nonlinear_family().instantiate(15).unwrap();
        let params = SchemeParams::new(&spec, 16, 1.0, SolverSettings::default()).unwrap();
        let f = ForcingGrid::for_spec(&spec, &params);
        let path = generate_path(16, 4, 1.0, 9).unwrap();
        let base = integrate(&spec, &params, &path, &f).unwrap();
        let other = generate_path(16, 4, 1.0, 10).unwrap();
        for cut in [1, 5, 11] {
            // agrees with `path` on steps ≤ cut and with `other` after
            let raw = (1..=16)
                .flat_map(|n| if n <= cut { path.increment(n) } else { other.increment(n) }.to_vec())
                .collect();
            let spliced = WienerPath::from_increments(16, 4, path.tau(), 9, raw).unwrap();
            let t = integrate(&spec, &params, &spliced, &f).unwrap();
            for n in 0..=cut {
                assert_eq!(t.v[n], base.v[n]);
                assert_eq!(t.u[n], base.u[n]);
            }
            assert_ne!(t.v[cut + 1], base.v[cut + 1]);
        }
    }

    #[test]
    fn first_step_ignores_the_seed() {
        let spec = nonlinear_family().instantiate(15).unwrap();
        let params = SchemeParams::new(&spec, 8, 0.5, SolverSettings::default()).unwrap();
        let f = ForcingGrid::for_spec(&spec, &params);
        let a = integrate(&spec, &params, &generate_path_indexed(8, 4, 0.5, 1, 0).unwrap(), &f).unwrap();
        let b = integrate(&spec, &params, &generate_path_indexed(8, 4, 0.5, 2, 7).unwrap(), &f).unwrap();
        assert_eq!(a.v[1], b.v[1]);
        assert_ne!(a.v[2], b.v[2]);
    }

    #[test]
    fn displacement_is_running_sum_of_velocities() {
        let spec = nonlinear_family().instantiate(31).unwrap();
        let params = SchemeParams::new(&spec, 64, 1.0, SolverSettings::default()).unwrap();
        let traj = integrate(
            &spec,
            &params,
            &generate_path(64, 4, 1.0, 5).unwrap(),
            &ForcingGrid::for_spec(&spec, &params),
        )
        .unwrap();
        let scale = traj.u.iter().flat_map(|x| x.iter()).fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(traj.displacement_drift(params.tau()) <= 1e-12 * scale);
    }

    #[test]
    fn matches_three_level_displacement_form() {
        // linear damping, no noise: (uⁿ - 2uⁿ⁻¹ + uⁿ⁻²)/τ² M + μK(uⁿ - uⁿ⁻¹)/τ + bK uⁿ = fⁿ
        let fam = ProblemFamily {
            damping: DampingChoice::Linear { mu: 0.7 },
            b: 1.3,
            noise: NoiseParams::zero(),
            modes: 1,
            forcing: Forcing::manufactured(0.7, 1.3),
            initial_u: InitialData::Sine { amplitude: 0.5, mode: 2 },
            initial_v: InitialData::Sine { amplitude: 1.0, mode: 1 },
        };
        let spec = fam.instantiate(19).unwrap();
        let params = SchemeParams::new(&spec, 20, 1.0, SolverSettings::default()).unwrap();
        let f = ForcingGrid::for_spec(&spec, &params);
        let traj = integrate(&spec, &params, &generate_path(20, 1, 1.0, 0).unwrap(), &f).unwrap();

        let space = spec.space();
        let tau = params.tau();
        let (mu, b) = (0.7, 1.3);
        let lhs = space
            .mass()
            .scaled(1.0 / (tau * tau))
            .add_scaled(mu / tau + b, space.stiffness());
        let mut u_prev2 = &spec.initial_u().clone() - &spec.initial_v().scaled(tau);
        let mut u_prev = spec.initial_u().clone();
        for n in 1..=20 {
            let mut rhs: Vec<f64> = f.value(n).to_vec();
            let m1 = space.mass().mul_vec(&(&u_prev.scaled(2.0) - &u_prev2));
            let k1 = space.stiffness().mul_vec(&u_prev);
            for i in 0..rhs.len() {
                rhs[i] += m1[i] / (tau * tau) + mu / tau * k1[i];
            }
            let un: GalerkinVector = lhs.solve(&rhs).unwrap().into();
            let diff = (&un - &traj.u[n]).iter().fold(0.0f64, |a, &x| a.max(x.abs()));
            assert!(diff < 1e-9, "step {n}: {diff}");
            u_prev2 = u_prev;
            u_prev = un;
        }
    }

    #[test]
    fn forced_divergence_reports_step() {
        let mut fam = nonlinear_family();
        fam.noise.beta = 1e80;
        let spec = fam.instantiate(7).unwrap();
        let params = SchemeParams::ungated(8, 4.0, SolverSettings::default()).unwrap();
        let err = integrate(
            &spec,
            &params,
            &generate_path(8, 4, 4.0, 1).unwrap(),
            &ForcingGrid::for_spec(&spec, &params),
        )
        .unwrap_err();
        match err {
            Error::NonConvergence { step, .. } => assert!(step >= 2),
            e => panic!("unexpected {e}"),
        }
    }
}
