//! Conditionally positive definite (c.p.d.) certification.
//!
//! A symmetric `M` is c.p.d. when `cᵀ M c ≥ 0` for every `c` with `Σ c_i = 0`.
//! The check restricts the quadratic form to that zero-sum subspace through
//! an explicit orthonormal (Helmert) basis and inspects the smallest
//! eigenvalue of the restricted matrix.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{MlgcnError, Result};
use crate::linalg::{self, eig_sym};

pub const DEFAULT_CPD_TOL: f64 = 1e-9;

/// Inputs with relative asymmetry above this are flagged as symmetrized.
pub const CPD_SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpdReport {
    pub id: Option<String>,
    /// Smallest eigenvalue of the form restricted to zero-sum vectors
    /// (0 for 1×1 matrices, whose zero-sum subspace is trivial).
    pub min_centered_eigenvalue: f64,
    pub is_cpd: bool,
    pub tolerance: f64,
    /// The input was not symmetric, so its symmetric part was tested.
    pub symmetrized: bool,
}

impl CpdReport {
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }
}

/// Orthonormal basis of `{c : Σ c_i = 0}` as the columns of an `n × (n-1)` matrix.
pub fn zero_sum_basis(n: usize) -> Array2<f64> {
    let mut q = Array2::zeros((n, n.saturating_sub(1)));
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[[i, k - 1]] = 1.0 / norm;
        }
        q[[k, k - 1]] = -(k as f64) / norm;
    }
    q
}

pub fn cpd_check(m: ArrayView2<'_, f64>, tol: f64) -> Result<CpdReport> {
    if !m.is_square() {
        return Err(MlgcnError::shape(
            "cpd_check",
            format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(MlgcnError::numerical("cpd_check", "matrix has non-finite entries"));
    }
    if !(tol >= 0.0) {
        return Err(MlgcnError::Parameter(format!("tolerance must be non-negative, got {tol}")));
    }
    let n = m.nrows();
    let symmetrized = !linalg::is_symmetric(m, CPD_SYMMETRY_TOL);
    if symmetrized {
        log::debug!(
            "cpd_check: testing the symmetric part of a non-symmetric matrix (max skew {:e})",
            linalg::asymmetry(m)
        );
    }
    let sym = linalg::symmetrize(m);
    let min_centered_eigenvalue = if n <= 1 {
        0.0
    } else {
        let q = zero_sum_basis(n);
        let restricted = q.t().dot(&sym).dot(&q);
        eig_sym(linalg::symmetrize(restricted.view()).view())?.min_value()
    };
    Ok(CpdReport {
        id: None,
        min_centered_eigenvalue,
        is_cpd: min_centered_eigenvalue >= -tol,
        tolerance: tol,
        symmetrized,
    })
}

/// Anchor-point centering on the last index:
/// `L̂_ij = L_ij - L_{i,a} - L_{a,j} + L_{a,a}` for `i, j < a = n`.
pub fn hat_transform(l: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if !l.is_square() || l.nrows() < 2 {
        return Err(MlgcnError::Parameter(format!(
            "hat transform needs a square matrix of size at least 2, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    let a = l.nrows() - 1;
    Ok(Array2::from_shape_fn((a, a), |(i, j)| {
        l[[i, j]] - l[[i, a]] - l[[a, j]] + l[[a, a]]
    }))
}
