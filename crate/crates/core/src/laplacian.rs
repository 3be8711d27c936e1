//! Affinity matrices, the three elementary laplacian families, spectral
//! rescaling, and stacks of elementary laplacians built from a menu.

use std::fmt;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{MlgcnError, Result};
use crate::graph::Graph;
use crate::linalg::{self, eig_sym};

/// Eigenvalue magnitudes at or below this (relative to the largest entry,
/// floored at 1) are treated as a zero spectrum when rescaling.
pub const RESCALE_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffinityKind {
    /// Adjacency indicator.
    Binary,
    /// Adjacency indicator times a gaussian similarity of node features.
    BinaryGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianFamily {
    /// `D - A`
    Unnormalized,
    /// `I - D^{-1/2} A D^{-1/2}`
    Normalized,
    /// `D^{-1} A`
    RandomWalk,
}

impl LaplacianFamily {
    pub fn is_symmetric(self) -> bool {
        !matches!(self, LaplacianFamily::RandomWalk)
    }
}

/// One entry of the elementary-laplacian menu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianDescriptor {
    pub family: LaplacianFamily,
    pub kind: AffinityKind,
    /// Matrix power applied to the adjacency indicator.
    #[serde(default = "default_power")]
    pub power: u32,
    /// Multiplies the per-graph base gaussian scale. Ignored for binary affinities.
    #[serde(default = "default_scale_multiplier")]
    pub scale_multiplier: f64,
    /// Clamp powered walk counts back to {0, 1}.
    #[serde(default)]
    pub rebinarize: bool,
}

fn default_power() -> u32 {
    1
}

fn default_scale_multiplier() -> f64 {
    1.0
}

impl LaplacianDescriptor {
    pub fn new(family: LaplacianFamily, kind: AffinityKind, power: u32, scale_multiplier: f64) -> Self {
        LaplacianDescriptor {
            family,
            kind,
            power,
            scale_multiplier,
            rebinarize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.power == 0 {
            return Err(MlgcnError::Parameter("affinity power must be at least 1".into()));
        }
        if !(self.scale_multiplier > 0.0 && self.scale_multiplier.is_finite()) {
            return Err(MlgcnError::Parameter(format!(
                "scale multiplier must be positive and finite, got {}",
                self.scale_multiplier
            )));
        }
        Ok(())
    }
}

impl fmt::Display for LaplacianDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = match self.family {
            LaplacianFamily::Unnormalized => "unnormalized",
            LaplacianFamily::Normalized => "normalized",
            LaplacianFamily::RandomWalk => "random_walk",
        };
        match self.kind {
            AffinityKind::Binary => write!(f, "{family}/binary/k{}", self.power)?,
            AffinityKind::BinaryGaussian => write!(
                f,
                "{family}/gaussian/k{}/s{:e}",
                self.power, self.scale_multiplier
            )?,
        }
        if self.rebinarize {
            f.write_str("/rebin")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    pub values: Array2<f64>,
    pub kind: AffinityKind,
    pub power: u32,
    pub scale_multiplier: f64,
    /// Effective gaussian scale `σ'`, if a gaussian factor was applied.
    pub gaussian_scale: Option<f64>,
    /// Set when a gaussian affinity degenerated to binary because `σ' = 0`.
    pub gaussian_fallback: bool,
}

/// Mean Euclidean distance between node features over all unordered node pairs.
/// Zero for single-node graphs.
pub fn mean_pairwise_distance(graph: &Graph) -> f64 {
    let n = graph.n();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for u in 0..n {
        for v in (u + 1)..n {
            total += squared_distance(graph, u, v).sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

fn squared_distance(graph: &Graph, u: usize, v: usize) -> f64 {
    graph
        .feature(u)
        .iter()
        .zip(graph.feature(v).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

pub fn build_affinity(
    graph: &Graph,
    kind: AffinityKind,
    power: u32,
    scale_multiplier: f64,
) -> Result<AffinityMatrix> {
    build_affinity_with(graph, kind, power, scale_multiplier, false)
}

/// Builds `B^k` from the adjacency indicator `B` (walk counts, or clamped to
/// {0,1} when `rebinarize`), then for gaussian affinities multiplies it
/// entrywise by `exp(-‖ψ(v) - ψ(v')‖² / σ')` with
/// `σ' = scale_multiplier × mean pairwise feature distance`.
pub fn build_affinity_with(
    graph: &Graph,
    kind: AffinityKind,
    power: u32,
    scale_multiplier: f64,
    rebinarize: bool,
) -> Result<AffinityMatrix> {
    let n = graph.n();
    if n == 0 {
        return Err(MlgcnError::EmptyGraph);
    }
    LaplacianDescriptor {
        family: LaplacianFamily::Unnormalized,
        kind,
        power,
        scale_multiplier,
        rebinarize,
    }
    .validate()?;

    let indicator = graph.adjacency();
    let mut values = indicator.clone();
    for _ in 1..power {
        values = values.dot(&indicator);
    }
    if rebinarize {
        values.mapv_inplace(|x| if x > 0.0 { 1.0 } else { 0.0 });
    }

    let mut gaussian_scale = None;
    let mut gaussian_fallback = false;
    if kind == AffinityKind::BinaryGaussian {
        let scale = scale_multiplier * mean_pairwise_distance(graph);
        if scale > 0.0 && scale.is_finite() {
            for u in 0..n {
                for v in u..n {
                    let k = (-squared_distance(graph, u, v) / scale).exp();
                    values[[u, v]] *= k;
                    if u != v {
                        values[[v, u]] *= k;
                    }
                }
            }
            gaussian_scale = Some(scale);
        } else {
            log::warn!(
                "gaussian scale is {scale:e} (identical node features?); using the binary affinity"
            );
            gaussian_fallback = true;
        }
    }

    Ok(AffinityMatrix {
        values,
        kind,
        power,
        scale_multiplier,
        gaussian_scale,
        gaussian_fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    pub values: Array2<f64>,
    pub family: LaplacianFamily,
    /// True once mapped to `2L/λmax - I`.
    pub rescaled: bool,
}

impl LaplacianMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Applies the family's formula with `D` the row-sum degree matrix. Nodes of
/// zero degree get zero `D^{-1/2}` / `D^{-1}` entries.
pub fn build_laplacian(affinity: &AffinityMatrix, family: LaplacianFamily) -> Result<LaplacianMatrix> {
    let a = &affinity.values;
    if !a.is_square() {
        return Err(MlgcnError::shape("build_laplacian", "affinity is not square"));
    }
    let n = a.nrows();
    let degree: Array1<f64> = a.sum_axis(ndarray::Axis(1));
    let values = match family {
        LaplacianFamily::Unnormalized => {
            let mut l = a.mapv(|x| -x);
            for i in 0..n {
                l[[i, i]] += degree[i];
            }
            l
        }
        LaplacianFamily::Normalized => {
            let inv_sqrt = degree.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
            let mut l = Array2::from_shape_fn((n, n), |(i, j)| -inv_sqrt[i] * a[[i, j]] * inv_sqrt[j]);
            for i in 0..n {
                l[[i, i]] += 1.0;
            }
            l
        }
        LaplacianFamily::RandomWalk => {
            let inv = degree.mapv(|d| if d > 0.0 { 1.0 / d } else { 0.0 });
            Array2::from_shape_fn((n, n), |(i, j)| inv[i] * a[[i, j]])
        }
    };
    Ok(LaplacianMatrix {
        values,
        family,
        rescaled: false,
    })
}

/// The rescaling eigenvalue: largest eigenvalue for symmetric matrices,
/// largest eigenvalue modulus otherwise.
pub fn rescale_eigenvalue(values: &Array2<f64>, symmetric: bool) -> Result<f64> {
    if symmetric {
        Ok(eig_sym(values.view())?.max_value())
    } else {
        linalg::spectral_radius(values.view())
    }
}

/// `2M/λ - I`, or `-I` when `λ` is numerically zero or negative.
pub fn rescale_with(values: &Array2<f64>, lambda_max: f64) -> Array2<f64> {
    let n = values.nrows();
    let scale = linalg::max_abs(values.view()).max(1.0);
    if lambda_max <= RESCALE_ZERO_TOL * scale {
        return -Array2::<f64>::eye(n);
    }
    let mut out = values.mapv(|x| 2.0 * x / lambda_max);
    for i in 0..n {
        out[[i, i]] -= 1.0;
    }
    out
}

/// Maps the spectrum into `[-1, 1]` via `2L/λmax - I`.
pub fn rescale_laplacian(laplacian: &LaplacianMatrix) -> Result<LaplacianMatrix> {
    let lambda = rescale_eigenvalue(&laplacian.values, laplacian.family.is_symmetric())?;
    let scale = linalg::max_abs(laplacian.values.view()).max(1.0);
    if lambda <= RESCALE_ZERO_TOL * scale {
        log::warn!(
            "{:?} laplacian has largest eigenvalue {lambda:e}; rescaling to -I",
            laplacian.family
        );
    }
    Ok(LaplacianMatrix {
        values: rescale_with(&laplacian.values, lambda),
        family: laplacian.family,
        rescaled: true,
    })
}

/// Elementary laplacians of one graph, in menu order.
#[derive(Debug, Clone)]
pub struct LaplacianStack {
    pub laplacians: Vec<LaplacianMatrix>,
    pub recipe: Vec<LaplacianDescriptor>,
}

impl LaplacianStack {
    pub fn build(graph: &Graph, menu: &[LaplacianDescriptor]) -> Result<Self> {
        if menu.is_empty() {
            return Err(MlgcnError::Usage("laplacian menu is empty".into()));
        }
        let laplacians = menu
            .iter()
            .map(|d| {
                let affinity =
                    build_affinity_with(graph, d.kind, d.power, d.scale_multiplier, d.rebinarize)?;
                build_laplacian(&affinity, d.family)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LaplacianStack {
            laplacians,
            recipe: menu.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.laplacians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laplacians.is_empty()
    }

    pub fn n(&self) -> usize {
        self.laplacians.first().map_or(0, LaplacianMatrix::n)
    }

    pub fn matrices(&self) -> Vec<&Array2<f64>> {
        self.laplacians.iter().map(|l| &l.values).collect()
    }
}
