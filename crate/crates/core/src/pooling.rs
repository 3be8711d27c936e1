//! Label-partitioned neighborhood expansion followed by global pooling.
//!
//! Node `v` is expanded to `φ(v) = (x_v, mean_{N_r^1(v)} x, ..., mean_{N_r^L(v)} x)`
//! where `N_r^l(v)` holds the nodes within `r` hops of `v` carrying label `l`
//! (`v` itself excluded). Empty subsets contribute a zero block. Summing `φ`
//! over nodes gives a permutation-invariant graph vector.

use std::cmp::Ordering;

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{MlgcnError, Result};
use crate::graph::Graph;

/// `N_r^l(v)` for every node and label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodIndex {
    hops: usize,
    /// `sets[v][l]` for 0-based label slot `l`, sorted node ids.
    sets: Vec<Vec<Vec<usize>>>,
}

impl NeighborhoodIndex {
    /// `num_labels == 1` puts every neighbor into a single subset; otherwise
    /// it must cover the graph's label range and subsets follow node labels.
    pub fn build(graph: &Graph, hops: usize, num_labels: usize) -> Result<Self> {
        if hops == 0 {
            return Err(MlgcnError::Parameter("neighborhood radius must be at least 1".into()));
        }
        if num_labels == 0 {
            return Err(MlgcnError::Parameter("label count must be at least 1".into()));
        }
        if num_labels > 1 && num_labels < graph.num_labels() {
            return Err(MlgcnError::Parameter(format!(
                "{num_labels} label subsets cannot partition a graph with {} labels",
                graph.num_labels()
            )));
        }
        let neighbors = graph.neighbor_lists();
        let labels = graph.labels();
        let sets = (0..graph.n())
            .map(|v| {
                let mut subsets = vec![Vec::new(); num_labels];
                for (w, d) in graph.bfs_distances(v, &neighbors).into_iter().enumerate() {
                    if w == v || !matches!(d, Some(d) if d <= hops) {
                        continue;
                    }
                    let slot = if num_labels == 1 { 0 } else { labels[w] - 1 };
                    subsets[slot].push(w);
                }
                subsets
            })
            .collect();
        Ok(NeighborhoodIndex { hops, sets })
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn num_labels(&self) -> usize {
        self.sets.first().map_or(0, Vec::len)
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    /// `N_r^l(v)` for a 1-based label `l`.
    pub fn subset(&self, v: usize, label: usize) -> &[usize] {
        &self.sets[v][label - 1]
    }

    /// `N_r(v)`, the union over labels, sorted.
    pub fn neighborhood(&self, v: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self.sets[v].iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Width of `φ` for per-node features of width `features`.
    pub fn expanded_width(&self, features: usize) -> usize {
        features * (self.num_labels() + 1)
    }
}

fn check_rows(stage: &'static str, x: &Array2<f64>, index: &NeighborhoodIndex) -> Result<()> {
    if x.nrows() != index.n() {
        return Err(MlgcnError::shape(
            stage,
            format!("{} feature rows for a {}-node neighborhood index", x.nrows(), index.n()),
        ));
    }
    Ok(())
}

fn mean_rows(x: &Array2<f64>, nodes: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(x.ncols());
    for &w in nodes {
        acc += &x.row(w);
    }
    if !nodes.is_empty() {
        acc /= nodes.len() as f64;
    }
    acc
}

/// `n × F(L+1)` expansion of per-node features.
pub fn expand(conv_out: &Array2<f64>, index: &NeighborhoodIndex) -> Result<Array2<f64>> {
    check_rows("expand", conv_out, index)?;
    let f = conv_out.ncols();
    let mut out = Array2::zeros((conv_out.nrows(), index.expanded_width(f)));
    for (v, subsets) in index.sets.iter().enumerate() {
        out.slice_mut(s![v, 0..f]).assign(&conv_out.row(v));
        for (l, nodes) in subsets.iter().enumerate() {
            let start = (l + 1) * f;
            out.slice_mut(s![v, start..start + f]).assign(&mean_rows(conv_out, nodes));
        }
    }
    Ok(out)
}

/// Adjoint of [`expand`].
pub fn expand_backward(grad_expanded: &Array2<f64>, index: &NeighborhoodIndex, features: usize) -> Result<Array2<f64>> {
    check_rows("expand_backward", grad_expanded, index)?;
    if grad_expanded.ncols() != index.expanded_width(features) {
        return Err(MlgcnError::shape("expand_backward", "gradient width does not match the expansion"));
    }
    let f = features;
    let mut grad = grad_expanded.slice(s![.., 0..f]).to_owned();
    for (v, subsets) in index.sets.iter().enumerate() {
        for (l, nodes) in subsets.iter().enumerate() {
            if nodes.is_empty() {
                continue;
            }
            let start = (l + 1) * f;
            let share = grad_expanded.slice(s![v, start..start + f]).mapv(|g| g / nodes.len() as f64);
            for &w in nodes {
                let mut row = grad.row_mut(w);
                row += &share;
            }
        }
    }
    Ok(grad)
}

/// Unpartitioned propagation baseline: `x_v + mean_{N_r(v)} x`.
pub fn propagate(conv_out: &Array2<f64>, index: &NeighborhoodIndex) -> Result<Array2<f64>> {
    check_rows("propagate", conv_out, index)?;
    let mut out = conv_out.clone();
    for v in 0..index.n() {
        let mean = mean_rows(conv_out, &index.neighborhood(v));
        let mut row = out.row_mut(v);
        row += &mean;
    }
    Ok(out)
}

/// Adjoint of [`propagate`].
pub fn propagate_backward(grad_out: &Array2<f64>, index: &NeighborhoodIndex) -> Result<Array2<f64>> {
    check_rows("propagate_backward", grad_out, index)?;
    let mut grad = grad_out.clone();
    for v in 0..index.n() {
        let nodes = index.neighborhood(v);
        if nodes.is_empty() {
            continue;
        }
        let share = grad_out.row(v).mapv(|g| g / nodes.len() as f64);
        for w in nodes {
            let mut row = grad.row_mut(w);
            row += &share;
        }
    }
    Ok(grad)
}

fn lexicographic(a: &ArrayView1<'_, f64>, b: &ArrayView1<'_, f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Sum of rows (or their mean when `mean` is set). Rows are added in
/// lexicographic order, so any row permutation gives the same bits.
pub fn global_pool(expanded: &Array2<f64>, mean: bool) -> Result<Array1<f64>> {
    let n = expanded.nrows();
    if n == 0 {
        return Err(MlgcnError::EmptyGraph);
    }
    let mut rows: Vec<ArrayView1<'_, f64>> = expanded.rows().into_iter().collect();
    rows.sort_by(lexicographic);
    let mut total = Array1::zeros(expanded.ncols());
    for row in rows {
        total += &row;
    }
    if mean {
        total /= n as f64;
    }
    Ok(total)
}

/// Adjoint of [`global_pool`]: every row receives the pooled gradient.
pub fn global_pool_backward(grad: &Array1<f64>, n: usize, mean: bool) -> Array2<f64> {
    let row = if mean { grad / n as f64 } else { grad.clone() };
    let mut out = Array2::zeros((n, grad.len()));
    for mut r in out.rows_mut() {
        r.assign(&row);
    }
    out
}
