//! Piecewise-constant-in-time extensions of a discrete trajectory.
//!
//! `RIGHT`: the value on `(t_{n-1}, t_n]` is level `n` (and `v(0) = v¹`).
//! `LEFT`: the value on `[t_{n-1}, t_n)` is level `n-1` for `n ≥ 2`, a fixed
//! head value on `[0, τ)`, and level `N` at `T`. Time integrals of products
//! of such processes are evaluated as exact cell sums.

use std::borrow::Cow;

use crate::error::{check_dim, Error, Result};
use crate::linalg::dot;
use crate::mesh::GalerkinVector;
use crate::stepper::Trajectory;

// grid snapping tolerance, in units of τ
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    tau: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::ZeroDimension);
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be positive and finite, got {horizon}"),
            });
        }
        Ok(Self {
            steps,
            tau: horizon / steps as f64,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.steps as f64
    }

    fn check(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        let slack = SNAP * self.tau;
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        Ok(t / self.tau)
    }

    /// Index `n` of the right-closed cell `(t_{n-1}, t_n]` holding `t`;
    /// `0` for `t = 0`.
    pub fn right_cell(&self, t: f64) -> Result<usize> {
        let x = self.check(t)?;
        let k = x.round();
        let n = if (x - k).abs() <= SNAP { k } else { x.ceil() };
        Ok((n.max(0.0) as usize).min(self.steps))
    }

    /// Index `k` with `t ∈ [t_k, t_{k+1})`, or `N` at `t = T`.
    pub fn left_node(&self, t: f64) -> Result<usize> {
        let x = self.check(t)?;
        let k = x.round();
        let n = if (x - k).abs() <= SNAP { k } else { x.floor() };
        Ok((n.max(0.0) as usize).min(self.steps))
    }
}

/// `θ⁺(t)`: `0` at `t = 0`, otherwise the right end `t_n` of the cell
/// `(t_{n-1}, t_n]` containing `t`.
pub fn theta_plus(t: f64, grid: &TimeGrid) -> Result<f64> {
    Ok(grid.right_cell(t)? as f64 * grid.tau())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct PiecewiseConstantProcess<'a> {
    grid: TimeGrid,
    // levels 0..=N
    levels: Cow<'a, [GalerkinVector]>,
    convention: Convention,
    // LEFT: value on [0, τ); RIGHT: value at t = 0 when not level 1
    head: Option<GalerkinVector>,
}

impl<'a> PiecewiseConstantProcess<'a> {
    fn build(
        grid: TimeGrid,
        levels: Cow<'a, [GalerkinVector]>,
        convention: Convention,
        head: Option<GalerkinVector>,
    ) -> Result<Self> {
        check_dim(grid.steps() + 1, levels.len())?;
        let dim = levels[0].len();
        for x in levels.iter().chain(head.as_ref()) {
            check_dim(dim, x.len())?;
        }
        Ok(Self {
            grid,
            levels,
            convention,
            head,
        })
    }

    /// `RIGHT` extension of `levels[0..=N]`.
    pub fn right(grid: TimeGrid, levels: &'a [GalerkinVector]) -> Result<Self> {
        Self::build(grid, Cow::Borrowed(levels), Convention::Right, None)
    }

    /// `LEFT` extension of `levels[0..=N]` with value `head` on `[0, τ)`.
    pub fn left(grid: TimeGrid, levels: &'a [GalerkinVector], head: GalerkinVector) -> Result<Self> {
        Self::build(grid, Cow::Borrowed(levels), Convention::Left, Some(head))
    }

    /// `v_ℓ`.
    pub fn velocity(grid: TimeGrid, traj: &'a Trajectory) -> Result<Self> {
        Self::right(grid, &traj.v)
    }

    /// `v_ℓ⁻`, zero on `[0, τ)`.
    pub fn velocity_minus(grid: TimeGrid, traj: &'a Trajectory) -> Result<Self> {
        Self::left(grid, &traj.v, GalerkinVector::zeros(traj.v[0].len()))
    }

    /// `u_ℓ`.
    pub fn displacement(grid: TimeGrid, traj: &'a Trajectory) -> Result<Self> {
        Self::right(grid, &traj.u)
    }

    /// `u_ℓ⁻`, equal to `u⁰` on `[0, τ)`.
    pub fn displacement_minus(grid: TimeGrid, traj: &'a Trajectory) -> Result<Self> {
        Self::left(grid, &traj.u, traj.u[0].clone())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn dim(&self) -> usize {
        self.levels[0].len()
    }

    /// Value on the open cell `(t_{n-1}, t_n)`, `n` in `1..=N`.
    pub fn cell_value(&self, n: usize) -> &GalerkinVector {
        assert!(n >= 1 && n <= self.grid.steps(), "cell {n} outside 1..={}", self.grid.steps());
        match self.convention {
            Convention::Right => &self.levels[n],
            Convention::Left if n == 1 => self.head.as_ref().expect("left process has a head"),
            Convention::Left => &self.levels[n - 1],
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<&GalerkinVector> {
        Ok(match self.convention {
            Convention::Right => match self.grid.right_cell(t)? {
                0 => self.head.as_ref().unwrap_or(&self.levels[1]),
                n => &self.levels[n],
            },
            Convention::Left => match self.grid.left_node(t)? {
                0 => self.head.as_ref().expect("left process has a head"),
                k => &self.levels[k],
            },
        })
    }

    /// `S y`: `(1/τ) ∫_{θ⁺(t)}^{θ⁺(t+τ)} y ds` on `[0, T-τ]`, zero after.
    /// On cell `n ≤ N-1` this is the cell-`(n+1)` value of `y`.
    pub fn steklov_average(&self) -> PiecewiseConstantProcess<'static> {
        let steps = self.grid.steps();
        let zero = GalerkinVector::zeros(self.dim());
        let mut levels = Vec::with_capacity(steps + 1);
        levels.push(zero.clone());
        for n in 1..steps {
            levels.push(self.cell_value(n + 1).clone());
        }
        levels.push(zero);
        // at t = 0 the window is (0, τ], i.e. cell 1
        let at_zero = self.cell_value(1).clone();
        PiecewiseConstantProcess {
            grid: self.grid,
            levels: Cow::Owned(levels),
            convention: Convention::Right,
            head: Some(at_zero),
        }
    }
}

fn check_shared(p: &PiecewiseConstantProcess<'_>, q: &PiecewiseConstantProcess<'_>) -> Result<()> {
    check_dim(p.grid.steps(), q.grid.steps())?;
    check_dim(p.dim(), q.dim())?;
    if (p.grid.tau() - q.grid.tau()).abs() > SNAP * p.grid.tau() {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "processes live on different time grids".into(),
        });
    }
    Ok(())
}

/// `∫_{t_{first-1}}^T ⟨p(t), q(t)⟩ dt` with the coefficient (duality)
/// pairing, summed cell by cell.
pub fn pairing_integral(p: &PiecewiseConstantProcess<'_>, q: &PiecewiseConstantProcess<'_>, first_cell: usize) -> Result<f64> {
    check_shared(p, q)?;
    let tau = p.grid.tau();
    Ok((first_cell.max(1)..=p.grid.steps())
        .map(|n| tau * dot(p.cell_value(n), q.cell_value(n)))
        .sum())
}

/// `∫_0^T |p(t) - q(t)|² dt` for a user-supplied squared norm.
pub fn distance_integral<F>(p: &PiecewiseConstantProcess<'_>, q: &PiecewiseConstantProcess<'_>, norm_sq: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_shared(p, q)?;
    let tau = p.grid.tau();
    Ok((1..=p.grid.steps())
        .map(|n| tau * norm_sq(&(p.cell_value(n) - q.cell_value(n))))
        .sum())
}

/// Both sides of `∫_0^T ⟨S y, x⟩ dt = ∫_τ^T ⟨y, x⁻⟩ dt`, where `x` and
/// `x⁻` are the `RIGHT` and `LEFT` extensions of `x_levels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteklovCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl SteklovCheck {
    pub fn defect(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// Defect over `|lhs| + |rhs|`; zero when both sides vanish.
    pub fn relative_defect(&self) -> f64 {
        let scale = self.lhs.abs() + self.rhs.abs();
        if scale == 0.0 {
            0.0
        } else {
            self.defect() / scale
        }
    }
}

pub fn verify_steklov_identity(y: &PiecewiseConstantProcess<'_>, x_levels: &[GalerkinVector], head: GalerkinVector) -> Result<SteklovCheck> {
    let grid = *y.grid();
    let x = PiecewiseConstantProcess::right(grid, x_levels)?;
    let x_minus = PiecewiseConstantProcess::left(grid, x_levels, head)?;
    let sy = y.steklov_average();
    Ok(SteklovCheck {
        lhs: pairing_integral(&sy, &x, 1)?,
        rhs: pairing_integral(y, &x_minus, 2)?,
    })
}
