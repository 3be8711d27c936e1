//! Chebyshev spectral graph convolution, `Σ_k θ_k T_k(L) ψ`.
//!
//! The recursion runs on the signal, `X_0 = ψ`, `X_1 = Lψ`,
//! `X_k = 2L X_{k-1} - X_{k-2}`, so `T_k(L)` is never formed.

use ndarray::{s, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{MlgcnError, Result};
use crate::linalg;

/// Spectral norms above this trigger a warning in [`cheb_basis`].
pub const SPECTRAL_NORM_WARN: f64 = 1.1;

/// Coefficients `θ[c, f, k]` for input channel `c`, output filter `f`, order `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebFilterBank {
    pub theta: Array3<f64>,
}

impl ChebFilterBank {
    pub fn zeros(in_channels: usize, filters: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(MlgcnError::Parameter("Chebyshev order must be at least 1".into()));
        }
        if in_channels == 0 || filters == 0 {
            return Err(MlgcnError::Parameter("filter bank needs at least one input and one output channel".into()));
        }
        Ok(ChebFilterBank {
            theta: Array3::zeros((in_channels, filters, order)),
        })
    }

    pub fn from_theta(theta: Array3<f64>) -> Result<Self> {
        let (c, f, k) = theta.dim();
        if c == 0 || f == 0 || k == 0 {
            return Err(MlgcnError::Parameter("filter bank dimensions must be positive".into()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(MlgcnError::Parameter("non-finite Chebyshev coefficient".into()));
        }
        Ok(ChebFilterBank { theta })
    }

    /// Gaussian init with variance `1 / (in_channels · order)`.
    pub fn randomize(&mut self, rng: &mut impl Rng) {
        let std = 1.0 / ((self.in_channels() * self.order()) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        self.theta.mapv_inplace(|_| normal.sample(rng));
    }

    pub fn in_channels(&self) -> usize {
        self.theta.dim().0
    }

    pub fn filters(&self) -> usize {
        self.theta.dim().1
    }

    pub fn order(&self) -> usize {
        self.theta.dim().2
    }

    /// `θ[·, ·, k]` as an `in_channels × filters` matrix.
    fn coefficients(&self, k: usize) -> Array2<f64> {
        self.theta.slice(s![.., .., k]).to_owned()
    }
}

fn check_operands(stage: &'static str, l: &Array2<f64>, signal: &Array2<f64>) -> Result<()> {
    if !l.is_square() {
        return Err(MlgcnError::shape(stage, format!("laplacian is {}x{}", l.nrows(), l.ncols())));
    }
    if signal.nrows() != l.nrows() {
        return Err(MlgcnError::shape(
            stage,
            format!("signal has {} rows but the laplacian is {}x{}", signal.nrows(), l.nrows(), l.ncols()),
        ));
    }
    Ok(())
}

fn warn_if_unbounded(l: &Array2<f64>) {
    // ‖L‖₂ ≤ max row sum of |L| for symmetric L; only refine when that bound is loose
    let row_bound = l
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if row_bound <= SPECTRAL_NORM_WARN {
        return;
    }
    let norm = spectral_norm_estimate(l);
    if norm > SPECTRAL_NORM_WARN {
        log::warn!("Chebyshev operator has spectral norm ≈ {norm:.3}; expected a spectrum in [-1, 1]");
    }
}

/// Power iteration on `LᵀL`.
fn spectral_norm_estimate(l: &Array2<f64>) -> f64 {
    let n = l.nrows();
    let mut v = ndarray::Array1::from_shape_fn(n, |i| 1.0 + 0.01 * i as f64);
    let mut estimate = 0.0;
    for _ in 0..50 {
        let w = l.t().dot(&l.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        estimate = norm.sqrt();
    }
    estimate
}

/// `[T_0(L)ψ, ..., T_{K-1}(L)ψ]`.
pub fn cheb_basis(l: &Array2<f64>, order: usize, signal: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
    check_operands("cheb_basis", l, signal)?;
    if order == 0 {
        return Err(MlgcnError::Parameter("Chebyshev order must be at least 1".into()));
    }
    warn_if_unbounded(l);
    let mut basis = Vec::with_capacity(order);
    basis.push(signal.clone());
    if order > 1 {
        basis.push(l.dot(signal));
    }
    for k in 2..order {
        let mut next = l.dot(&basis[k - 1]);
        next *= 2.0;
        next -= &basis[k - 2];
        basis.push(next);
    }
    Ok(basis)
}

#[derive(Debug, Clone)]
pub struct ChebCache {
    laplacian: Array2<f64>,
    basis: Vec<Array2<f64>>,
    filters: usize,
}

#[derive(Debug, Clone)]
pub struct ChebGrads {
    pub theta: Array3<f64>,
    pub signal: Array2<f64>,
    pub laplacian: Array2<f64>,
}

pub fn cheb_conv_forward(
    l: &Array2<f64>,
    bank: &ChebFilterBank,
    signal: &Array2<f64>,
) -> Result<(Array2<f64>, ChebCache)> {
    check_operands("cheb_conv", l, signal)?;
    if signal.ncols() != bank.in_channels() {
        return Err(MlgcnError::shape(
            "cheb_conv",
            format!("signal has {} channels, filter bank expects {}", signal.ncols(), bank.in_channels()),
        ));
    }
    let basis = cheb_basis(l, bank.order(), signal)?;
    let mut out = Array2::zeros((signal.nrows(), bank.filters()));
    for (k, x) in basis.iter().enumerate() {
        out += &x.dot(&bank.coefficients(k));
    }
    Ok((
        out,
        ChebCache {
            laplacian: l.clone(),
            basis,
            filters: bank.filters(),
        },
    ))
}

/// Reverse pass through the filter mix and the Chebyshev recursion.
pub fn cheb_conv_backward(cache: &ChebCache, bank: &ChebFilterBank, grad_out: &Array2<f64>) -> Result<ChebGrads> {
    let n = cache.laplacian.nrows();
    let order = cache.basis.len();
    let in_channels = cache.basis[0].ncols();
    if bank.order() != order || bank.in_channels() != in_channels || bank.filters() != cache.filters {
        return Err(MlgcnError::Usage("filter bank does not match the cached forward pass".into()));
    }
    if grad_out.nrows() != n || grad_out.ncols() != cache.filters {
        return Err(MlgcnError::Usage(format!(
            "output gradient is {}x{}, expected {n}x{}",
            grad_out.nrows(),
            grad_out.ncols(),
            cache.filters
        )));
    }

    let mut theta = Array3::zeros(bank.theta.raw_dim());
    let mut adjoints = Vec::with_capacity(order);
    for (k, x) in cache.basis.iter().enumerate() {
        theta.slice_mut(s![.., .., k]).assign(&x.t().dot(grad_out));
        adjoints.push(grad_out.dot(&bank.coefficients(k).t()));
    }

    let l = &cache.laplacian;
    let mut grad_l = Array2::zeros((n, n));
    for k in (2..order).rev() {
        let a_k = adjoints[k].clone();
        grad_l.scaled_add(2.0, &a_k.dot(&cache.basis[k - 1].t()));
        adjoints[k - 1].scaled_add(2.0, &l.t().dot(&a_k));
        adjoints[k - 2] -= &a_k;
    }
    if order > 1 {
        let a_1 = adjoints[1].clone();
        grad_l += &a_1.dot(&cache.basis[0].t());
        adjoints[0] += &l.t().dot(&a_1);
    }
    Ok(ChebGrads {
        theta,
        signal: adjoints.swap_remove(0),
        laplacian: grad_l,
    })
}

/// Reference path through the eigendecomposition, `U (Σ_k θ_k T_k(Λ)) Uᵀ ψ`,
/// for symmetric `L`.
pub fn spectral_filter_reference(
    l: &Array2<f64>,
    bank: &ChebFilterBank,
    signal: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_operands("spectral_filter_reference", l, signal)?;
    let eig = linalg::eig_sym(l.view())?;
    let mut out = Array2::zeros((signal.nrows(), bank.filters()));
    for c in 0..bank.in_channels() {
        let column = signal.slice(s![.., c..c + 1]).to_owned();
        for f in 0..bank.filters() {
            let coeffs = bank.theta.slice(s![c, f, ..]).to_vec();
            let filtered = eig
                .reconstruct_with(|x| chebyshev_series(x, &coeffs))
                .dot(&column);
            let mut target = out.slice_mut(s![.., f..f + 1]);
            target += &filtered;
        }
    }
    Ok(out)
}

/// `Σ_k θ_k T_k(x)` by the scalar recursion.
pub fn chebyshev_series(x: f64, theta: &[f64]) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    let mut total = 0.0;
    for (k, &t) in theta.iter().enumerate() {
        let value = match k {
            0 => 1.0,
            1 => x,
            _ => {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
                next
            }
        };
        total += t * value;
    }
    total
}
