//! Dense linear-algebra helpers shared by the laplacian, certification and
//! convolution code. Matrices are small (tens of nodes), so everything is dense.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{MlgcnError, Result};

/// Asymmetry above this (relative to the largest entry, floored at 1) is an error in [`eig_sym`].
pub const EIG_SYM_ASYMMETRY_LIMIT: f64 = 1e-6;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Array2<f64>,
}

impl SymEigen {
    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).mapv_inplace(|x| x * s);
        }
        scaled.dot(&self.vectors.t())
    }
}

pub fn max_abs(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

/// Largest `|m_ij - m_ji|`.
pub fn asymmetry(m: ArrayView2<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs());
        }
    }
    worst
}

pub fn is_symmetric(m: ArrayView2<'_, f64>, rel_tol: f64) -> bool {
    m.is_square() && asymmetry(m) <= rel_tol * max_abs(m).max(1.0)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = m.to_owned();
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            out[[i, j]] = avg;
            out[[j, i]] = avg;
        }
    }
    out
}

pub fn frobenius(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `Σ_ij a_ij b_ij`.
pub fn inner(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn to_dmatrix(m: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn check_square(stage: &'static str, m: ArrayView2<'_, f64>) -> Result<()> {
    if !m.is_square() {
        return Err(MlgcnError::shape(
            stage,
            format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(MlgcnError::numerical(stage, "matrix has non-finite entries"));
    }
    Ok(())
}

/// Symmetric eigendecomposition. Inputs are symmetrized first; asymmetry above
/// [`EIG_SYM_ASYMMETRY_LIMIT`] (relative) is rejected.
pub fn eig_sym(m: ArrayView2<'_, f64>) -> Result<SymEigen> {
    check_square("eig_sym", m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(SymEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let skew = asymmetry(m);
    let scale = max_abs(m).max(1.0);
    if skew > EIG_SYM_ASYMMETRY_LIMIT * scale {
        return Err(MlgcnError::numerical(
            "eig_sym",
            format!("matrix is not symmetric (max |m_ij - m_ji| = {skew:e})"),
        ));
    }
    let sym = symmetrize(m);
    let decomposition = nalgebra::linalg::SymmetricEigen::try_new(
        to_dmatrix(sym.view()),
        EIG_EPS,
        EIG_MAX_ITER,
    )
    .ok_or_else(|| {
        MlgcnError::numerical(
            "eig_sym",
            format!(
                "eigensolver did not converge (n = {n}, max |entry| = {:e}, frobenius = {:e})",
                max_abs(sym.view()),
                frobenius(sym.view())
            ),
        )
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[a].total_cmp(&decomposition.eigenvalues[b])
    });
    let values = Array1::from_iter(order.iter().map(|&i| decomposition.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(row, col)| {
        decomposition.eigenvectors[(row, order[col])]
    });
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues of a general real matrix as `(re, im)` pairs.
pub fn eigenvalues_general(m: ArrayView2<'_, f64>) -> Result<Vec<(f64, f64)>> {
    check_square("eigenvalues_general", m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    // Francis iterations can stall when eigenvalues share a modulus (e.g. ±1);
    // a diagonal shift breaks the tie without changing eigenvectors.
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    for shift in [0.0, 0.5, -0.37, 0.23] {
        let mut shifted = to_dmatrix(m);
        for i in 0..m.nrows() {
            shifted[(i, i)] += shift * scale;
        }
        if let Some(schur) = nalgebra::linalg::Schur::try_new(shifted, EIG_EPS, EIG_MAX_ITER) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|c| (c.re - shift * scale, c.im))
                .collect());
        }
    }
    Err(MlgcnError::numerical(
        "eigenvalues_general",
        format!(
            "Schur iteration did not converge (n = {}, max |entry| = {:e})",
            m.nrows(),
            max_abs(m)
        ),
    ))
}

/// Largest eigenvalue modulus of a general real matrix.
pub fn spectral_radius(m: ArrayView2<'_, f64>) -> Result<f64> {
    Ok(eigenvalues_general(m)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// Dominant real eigenvalue of a general matrix with its right and left
/// eigenvectors, so that `dλ/dM = v uᵀ / (vᵀ u)`.
#[derive(Debug, Clone)]
pub struct DominantEigen {
    pub value: f64,
    pub right: Array1<f64>,
    pub left: Array1<f64>,
}

impl DominantEigen {
    /// Derivative of the eigenvalue with respect to every matrix entry.
    pub fn value_gradient(&self) -> Array2<f64> {
        let n = self.right.len();
        let denom = self.left.dot(&self.right);
        Array2::from_shape_fn((n, n), |(i, j)| self.left[i] * self.right[j] / denom)
    }
}

/// Eigenvalue of largest modulus of a general matrix, which must be real and
/// simple. Eigenvectors come from shifted inverse iteration.
pub fn dominant_eigen(m: ArrayView2<'_, f64>) -> Result<DominantEigen> {
    let eigenvalues = eigenvalues_general(m)?;
    let n = m.nrows();
    if n == 0 {
        return Err(MlgcnError::shape("dominant_eigen", "empty matrix"));
    }
    let (re, im) = eigenvalues
        .iter()
        .copied()
        .max_by(|a, b| a.0.hypot(a.1).total_cmp(&b.0.hypot(b.1)))
        .expect("non-empty");
    let modulus = re.hypot(im);
    if im.abs() > 1e-9 * modulus.max(1e-300) {
        return Err(MlgcnError::numerical(
            "dominant_eigen",
            format!("dominant eigenvalue is complex ({re:e} + {im:e}i)"),
        ));
    }
    let right = inverse_iteration(to_dmatrix(m), re)?;
    let left = inverse_iteration(to_dmatrix(m).transpose(), re)?;
    if left.dot(&right).abs() < 1e-12 {
        return Err(MlgcnError::numerical(
            "dominant_eigen",
            "dominant eigenvalue is defective (left/right eigenvectors orthogonal)",
        ));
    }
    // Rayleigh-type refinement of the Schur estimate
    let value = left.dot(&m.dot(&right)) / left.dot(&right);
    Ok(DominantEigen { value, right, left })
}

fn inverse_iteration(m: DMatrix<f64>, shift: f64) -> Result<Array1<f64>> {
    let n = m.nrows();
    let scale = m.amax().max(1e-300);
    let mut vector = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64 + 1.0).sqrt());
    vector /= vector.norm();
    for &offset in &[1e-10, 1e-8, 1e-6] {
        let mut shifted = m.clone();
        let mu = shift + offset * scale;
        for i in 0..n {
            shifted[(i, i)] -= mu;
        }
        let lu = shifted.lu();
        let mut current = vector.clone();
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&current) {
                Some(next) if next.iter().all(|x| x.is_finite()) && next.norm() > 0.0 => {
                    current = &next / next.norm();
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let residual = (&m * &current - &current * shift).norm();
            if residual <= 1e-8 * scale.max(1.0) {
                // fix the sign so the largest-magnitude component is positive
                let pivot = current.iter().copied().fold(0.0_f64, |acc, x| {
                    if x.abs() > acc.abs() {
                        x
                    } else {
                        acc
                    }
                });
                if pivot < 0.0 {
                    current = -current;
                }
                return Ok(Array1::from_iter(current.iter().copied()));
            }
        }
    }
    Err(MlgcnError::numerical(
        "dominant_eigen",
        format!("inverse iteration failed to converge near eigenvalue {shift:e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_matrix_sorted_ascending() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let eig = eig_sym(m.view()).unwrap();
        assert_eq!(eig.values.to_vec(), vec![1.0, 3.0]);
        // columns are a permutation of the identity columns
        for j in 0..2 {
            let col = eig.vectors.column(j);
            let ones = col.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-12).count();
            assert_eq!(ones, 1);
        }
    }

    #[test]
    fn swap_matrix_closed_form() {
        let m = array![[0.0, 1.0], [1.0, 0.0]];
        let eig = eig_sym(m.view()).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        let u0 = eig.vectors.column(0);
        let u1 = eig.vectors.column(1);
        // (1, -1)/√2 up to sign, (1, 1)/√2 up to sign
        assert!((u0[0].abs() - s).abs() < 1e-12 && (u0[0] + u0[1]).abs() < 1e-12);
        assert!((u1[0].abs() - s).abs() < 1e-12 && (u1[0] - u1[1]).abs() < 1e-12);
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = eig_sym(Array2::<f64>::eye(3).view()).unwrap();
        for v in eig.values.iter() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn asymmetric_input_rejected_small_asymmetry_repaired() {
        let bad = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(
            eig_sym(bad.view()),
            Err(MlgcnError::Numerical { .. })
        ));
        let nearly = array![[1.0, 2.0], [2.0 + 1e-9, 1.0]];
        let eig = eig_sym(nearly.view()).unwrap();
        assert!((eig.values[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn non_square_rejected() {
        let m = Array2::<f64>::zeros((2, 3));
        assert!(matches!(eig_sym(m.view()), Err(MlgcnError::Shape { .. })));
    }

    #[test]
    fn dominant_eigen_of_stochastic_matrix() {
        let m = array![[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]];
        let dom = dominant_eigen(m.view()).unwrap();
        assert!((dom.value - 1.0).abs() < 1e-12);
        // right eigenvector of a row-stochastic matrix is constant
        let r = &dom.right;
        assert!((r[0] - r[1]).abs() < 1e-8 && (r[1] - r[2]).abs() < 1e-8);
    }

    #[test]
    fn dominant_eigen_gradient_matches_finite_differences() {
        let m = array![[1.0, 0.3, 0.2], [0.7, 2.0, 0.1], [0.4, 0.5, 0.8]];
        let dom = dominant_eigen(m.view()).unwrap();
        let grad = dom.value_gradient();
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut plus = m.clone();
                plus[[i, j]] += h;
                let mut minus = m.clone();
                minus[[i, j]] -= h;
                let fd = (dominant_eigen(plus.view()).unwrap().value
                    - dominant_eigen(minus.view()).unwrap().value)
                    / (2.0 * h);
                assert!((fd - grad[[i, j]]).abs() < 1e-7, "{i},{j}: {fd} vs {}", grad[[i, j]]);
            }
        }
    }

    #[test]
    fn complex_dominant_eigenvalue_is_an_error() {
        let rotation = array![[0.0, -1.0], [1.0, 0.0]];
        assert!(dominant_eigen(rotation.view()).is_err());
        assert!((spectral_radius(rotation.view()).unwrap() - 1.0).abs() < 1e-12);
    }
}
