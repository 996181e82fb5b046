//! Uniform P1 finite elements on (0, 1) with homogeneous Dirichlet
//! boundary conditions.
//!
//! Node `i` of the coefficient vector sits at `x = (i + 1) h`; the two
//! boundary nodes are implicit zeros. Cells are indexed `0..=m`, cell `c`
//! spanning `[c h, (c + 1) h]`.

use std::f64::consts::PI;
use std::ops::{Add, Deref, DerefMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{SymTridiag, TridiagFactor};

/// Uniform mesh of (0, 1) with `m` interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    m: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::ZeroDimension);
        }
        let h = 1.0 / (m + 1) as f64;
        let nodes = (1..=m).map(|i| i as f64 / (m + 1) as f64).collect();
        Ok(Self { m, h, nodes })
    }

    pub fn interior_nodes(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cells(&self) -> usize {
        self.m + 1
    }

    /// Whether every node of `self` is also a node of `finer`.
    pub fn is_nested_in(&self, finer: &Mesh1D) -> bool {
        (finer.m + 1) % (self.m + 1) == 0
    }
}

/// Coefficient vector of a function in the Galerkin space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GalerkinVector(Vec<f64>);

impl GalerkinVector {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        Self(coeffs)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    /// `self += s * x`
    pub fn axpy(&mut self, s: f64, x: &[f64]) {
        debug_assert_eq!(self.len(), x.len());
        for (a, b) in self.0.iter_mut().zip(x) {
            *a += s * b;
        }
    }
}

impl Deref for GalerkinVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GalerkinVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for GalerkinVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Add for &GalerkinVector {
    type Output = GalerkinVector;
    fn add(self, rhs: &GalerkinVector) -> GalerkinVector {
        debug_assert_eq!(self.len(), rhs.len());
        GalerkinVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &GalerkinVector {
    type Output = GalerkinVector;
    fn sub(self, rhs: &GalerkinVector) -> GalerkinVector {
        debug_assert_eq!(self.len(), rhs.len());
        GalerkinVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<&GalerkinVector> for f64 {
    type Output = GalerkinVector;
    fn mul(self, rhs: &GalerkinVector) -> GalerkinVector {
        rhs.scaled(self)
    }
}

/// Consistent mass matrix and Dirichlet stiffness matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FemMatrices {
    pub mass: SymTridiag,
    pub stiffness: SymTridiag,
}

impl FemMatrices {
    pub fn assemble(mesh: &Mesh1D) -> Result<Self> {
        let (m, h) = (mesh.interior_nodes(), mesh.width());
        Ok(Self {
            mass: SymTridiag::toeplitz(m, 2.0 * h / 3.0, h / 6.0)?,
            stiffness: SymTridiag::toeplitz(m, 2.0 / h, -1.0 / h)?,
        })
    }
}

/// A mesh together with its assembled and factored matrices: the concrete
/// Galerkin space every other module works in.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: Mesh1D,
    mats: FemMatrices,
    mass_factor: TridiagFactor,
    stiffness_factor: TridiagFactor,
}

impl FemSpace {
    /// Uniform P1 space with `m` interior nodes.
    pub fn new(m: usize) -> Result<Self> {
        let mesh = Mesh1D::new(m)?;
        let mats = FemMatrices::assemble(&mesh)?;
        Self::with_matrices(mesh, mats)
    }

    /// Space with caller-supplied Gram matrices (used for scalar surrogates
    /// such as mass = stiffness = identity). The mesh still provides the
    /// cell geometry for gradient-based operators.
    pub fn with_matrices(mesh: Mesh1D, mats: FemMatrices) -> Result<Self> {
        check_dim(mesh.interior_nodes(), mats.mass.dim())?;
        check_dim(mesh.interior_nodes(), mats.stiffness.dim())?;
        let mass_factor = mats.mass.factor()?;
        let stiffness_factor = mats.stiffness.factor()?;
        Ok(Self {
            mesh,
            mats,
            mass_factor,
            stiffness_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.interior_nodes()
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn matrices(&self) -> &FemMatrices {
        &self.mats
    }

    pub fn mass(&self) -> &SymTridiag {
        &self.mats.mass
    }

    pub fn stiffness(&self) -> &SymTridiag {
        &self.mats.stiffness
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim(), x.len())
    }

    /// L² inner product `xᵀ M y`.
    pub fn inner_h(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.mats.mass.bilinear(x, y))
    }

    pub fn norm_h_sq(&self, x: &[f64]) -> f64 {
        self.mats.mass.bilinear(x, x)
    }

    /// H¹₀ inner product `xᵀ K y` (unit coefficient), the V_A norm.
    pub fn inner_grad(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.mats.stiffness.bilinear(x, y))
    }

    pub fn norm_grad_sq(&self, x: &[f64]) -> f64 {
        self.mats.stiffness.bilinear(x, x)
    }

    /// Piecewise-constant gradient, one value per cell (`m + 1` values).
    pub fn gradient_at_cells(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let h = self.mesh.width();
        let m = self.dim();
        let node = |k: usize| if k == 0 || k == m + 1 { 0.0 } else { x[k - 1] };
        Ok((0..=m).map(|c| (node(c + 1) - node(c)) / h).collect())
    }

    /// `M⁻¹ a`: the Riesz representative in H of a dual coefficient vector.
    pub fn riesz_h(&self, a: &[f64]) -> Vec<f64> {
        self.mass_factor.solve(a)
    }

    /// `aᵀ M⁻¹ a`, the squared H-norm of a dual vector's representative.
    pub fn dual_norm_h_sq(&self, a: &[f64]) -> f64 {
        crate::linalg::dot(a, &self.riesz_h(a))
    }

    /// `aᵀ K⁻¹ a`, the squared V_A* norm of a dual vector restricted to V_m.
    pub fn dual_norm_grad_sq(&self, a: &[f64]) -> f64 {
        crate::linalg::dot(a, &self.stiffness_factor.solve(a))
    }

    /// Nodal interpolant of a continuous function.
    pub fn interpolate<F: Fn(f64) -> f64>(&self, f: F) -> GalerkinVector {
        GalerkinVector(self.mesh.nodes().iter().map(|&x| f(x)).collect())
    }

    /// Nodal interpolation of a P1 function onto a nested finer mesh. Exact:
    /// the result represents the same function.
    pub fn prolongate(&self, x: &[f64], finer: &FemSpace) -> Result<GalerkinVector> {
        self.check(x)?;
        if !self.mesh.is_nested_in(&finer.mesh) {
            return Err(Error::InvalidParameter {
                name: "mesh",
                reason: format!(
                    "mesh with {} nodes is not nested in mesh with {} nodes",
                    self.dim(),
                    finer.dim()
                ),
            });
        }
        let ratio = (finer.dim() + 1) / (self.dim() + 1);
        let m = self.dim();
        let node = |k: usize| if k == 0 || k == m + 1 { 0.0 } else { x[k - 1] };
        let out = (1..=finer.dim())
            .map(|k| {
                let (c, r) = (k / ratio, k % ratio);
                let w = r as f64 / ratio as f64;
                (1.0 - w) * node(c) + w * node((c + 1).min(m + 1))
            })
            .collect();
        Ok(GalerkinVector(out))
    }

    /// Mode `j ≥ 1` of the discrete Dirichlet Laplacian, normalized in H.
    /// The nodal sine vectors diagonalize every symmetric Toeplitz
    /// tridiagonal pair, so this is exact for the assembled matrices.
    pub fn eigenmode(&self, j: usize) -> Result<GalerkinVector> {
        let m = self.dim();
        if j == 0 || j > m {
            return Err(Error::InvalidParameter {
                name: "mode",
                reason: format!("mode {j} outside 1..={m}"),
            });
        }
        let raw: Vec<f64> = (1..=m)
            .map(|i| (j as f64 * PI * i as f64 / (m + 1) as f64).sin())
            .collect();
        let n = self.norm_h_sq(&raw).sqrt();
        Ok(GalerkinVector(raw.into_iter().map(|v| v / n).collect()))
    }

    /// Generalized eigenvalue `eᵀKe / eᵀMe` of mode `j`.
    pub fn eigenvalue(&self, j: usize) -> Result<f64> {
        let e = self.eigenmode(j)?;
        Ok(self.norm_grad_sq(&e) / self.norm_h_sq(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn single_node_matrices() {
        let s = FemSpace::new(1).unwrap();
        assert_eq!(s.mesh().width(), 0.5);
        assert!(close(s.mass().diag()[0], 1.0 / 3.0, 1e-15));
        assert!(close(s.stiffness().diag()[0], 4.0, 1e-15));
        assert!(close(s.inner_h(&[1.0], &[1.0]).unwrap(), 1.0 / 3.0, 1e-15));
    }

    #[test]
    fn three_node_stiffness() {
        let s = FemSpace::new(3).unwrap();
        assert_eq!(s.mesh().width(), 0.25);
        assert!(s.stiffness().diag().iter().all(|&d| close(d, 8.0, 1e-15)));
        assert!(s.stiffness().off().iter().all(|&o| close(o, -4.0, 1e-15)));
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(matches!(FemSpace::new(0), Err(Error::ZeroDimension)));
    }

    #[test]
    fn mesh_width_and_nesting() {
        for m in [1, 2, 7, 63] {
            let mesh = Mesh1D::new(m).unwrap();
            assert!((mesh.width() * (m + 1) as f64 - 1.0).abs() < 1e-15);
            let fine = Mesh1D::new(2 * m + 1).unwrap();
            assert!(mesh.is_nested_in(&fine));
            for x in mesh.nodes() {
                assert!(fine.nodes().iter().any(|y| (x - y).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn mass_rows_sum_to_width_in_interior() {
        let s = FemSpace::new(9).unwrap();
        let h = s.mesh().width();
        let row = s.mass().mul_vec(&[1.0; 9]);
        for r in &row[1..8] {
            assert!(close(*r, h, 1e-14));
        }
    }

    #[test]
    fn matrices_positive_definite() {
        for m in [1, 5, 64] {
            let s = FemSpace::new(m).unwrap();
            assert!(s.mass().factor().is_ok());
            assert!(s.stiffness().factor().is_ok());
        }
    }

    #[test]
    fn laplacian_of_linear_vanishes_in_interior() {
        let m = 12;
        let s = FemSpace::new(m).unwrap();
        let lin: Vec<f64> = (1..=m).map(|i| i as f64).collect();
        let r = s.stiffness().mul_vec(&lin);
        for v in &r[..m - 1] {
            assert!(v.abs() < 1e-10);
        }
        assert!(r[m - 1].abs() > 1.0);
    }

    #[test]
    fn gradients() {
        let s = FemSpace::new(1).unwrap();
        assert_eq!(s.gradient_at_cells(&[1.0]).unwrap(), vec![2.0, -2.0]);
        assert_eq!(s.gradient_at_cells(&[0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(s.gradient_at_cells(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn inner_products_reject_mismatch() {
        let s = FemSpace::new(3).unwrap();
        assert!(matches!(
            s.inner_h(&[1.0; 3], &[1.0; 2]),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
        assert!(s.inner_grad(&[1.0; 4], &[1.0; 3]).is_err());
        assert_eq!(s.inner_h(&[0.0; 3], &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn eigenmodes_orthonormal() {
        let s = FemSpace::new(15).unwrap();
        for i in 1..=15 {
            let ei = s.eigenmode(i).unwrap();
            for j in 1..=15 {
                let ej = s.eigenmode(j).unwrap();
                let g = s.inner_h(&ei, &ej).unwrap();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12, "({i},{j}) -> {g}");
                let k = s.inner_grad(&ei, &ej).unwrap();
                if i != j {
                    assert!(k.abs() < 1e-9);
                }
            }
            assert!(s.eigenvalue(i).unwrap() >= PI * PI);
        }
        assert!(s.eigenmode(16).is_err());
    }

    fn vec_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, m)
    }

    proptest! {
        #[test]
        fn inner_h_bilinear_symmetric(x in vec_strategy(8), y in vec_strategy(8), a in -5.0..5.0f64) {
            let s = FemSpace::new(8).unwrap();
            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            let lhs = s.inner_h(&ax, &y).unwrap();
            let rhs = a * s.inner_h(&x, &y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            prop_assert!((s.inner_h(&x, &y).unwrap() - s.inner_h(&y, &x).unwrap()).abs() < 1e-12);
            prop_assert!(s.inner_h(&x, &x).unwrap() >= 0.0);
        }

        #[test]
        fn gradient_telescopes(x in vec_strategy(10)) {
            let s = FemSpace::new(10).unwrap();
            let g = s.gradient_at_cells(&x).unwrap();
            let total: f64 = g.iter().map(|v| v * s.mesh().width()).sum();
            prop_assert!(total.abs() < 1e-12);
        }

        #[test]
        fn prolongation_preserves_norms(x in vec_strategy(7)) {
            let coarse = FemSpace::new(7).unwrap();
            let fine = FemSpace::new(15).unwrap();
            let y = coarse.prolongate(&x, &fine).unwrap();
            let (a, b) = (coarse.norm_h_sq(&x), fine.norm_h_sq(&y));
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            let (a, b) = (coarse.norm_grad_sq(&x), fine.norm_grad_sq(&y));
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn discrete_poincare(x in vec_strategy(12)) {
            let s = FemSpace::new(12).unwrap();
            let cp = 1.0 / (PI * PI) * (1.0 + 1e-12);
            prop_assert!(s.norm_h_sq(&x) <= cp * s.norm_grad_sq(&x) + 1e-300);
        }
    }

    #[test]
    fn poincare_constant_is_smallest_generalized_eigenvalue() {
        // Brute force: inverse iteration on K⁻¹M for small m; the largest
        // eigenvalue of K⁻¹M must not exceed 1/π².
        for m in [1, 2, 3, 5, 9] {
            let s = FemSpace::new(m).unwrap();
            let mut x = vec![1.0; m];
            let mut ratio = 0.0;
            for _ in 0..500 {
                let y = s.stiffness().solve(&s.mass().mul_vec(&x)).unwrap();
                let n = s.norm_h_sq(&y).sqrt();
                x = y.iter().map(|v| v / n).collect();
                ratio = s.norm_h_sq(&x) / s.norm_grad_sq(&x);
            }
            assert!(ratio <= 1.0 / (PI * PI), "m={m}: {ratio}");
            // closed-form smallest P1 eigenvalue 6(1 - cos πh) / (h²(2 + cos πh))
            let h = s.mesh().width();
            let c = (PI * h).cos();
            let lambda1 = 6.0 * (1.0 - c) / (h * h * (2.0 + c));
            assert!((ratio * lambda1 - 1.0).abs() < 1e-9, "m={m}: {ratio} vs {}", 1.0 / lambda1);
        }
    }
}
