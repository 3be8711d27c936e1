//! Node-labeled undirected graphs with per-node feature vectors, and their
//! plain-text serialization.
//!
//! Text layout (UTF-8, whitespace separated, `#` starts a comment):
//!
//! ```text
//! n p L
//! label f_1 ... f_p      # n node lines, labels in 1..=L
//! u v                    # one line per undirected edge, 0-based
//! ```

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{MlgcnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_labels: usize,
    /// Canonical form: `u < v`, sorted, unique.
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph, validating every invariant. Edges may be given in
    /// either orientation but each unordered pair at most once.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_labels: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(MlgcnError::EmptyGraph);
        }
        if features.ncols() == 0 {
            return Err(MlgcnError::InvalidGraph(
                "feature dimension must be at least 1".into(),
            ));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(MlgcnError::InvalidGraph("non-finite node feature".into()));
        }
        if labels.len() != n {
            return Err(MlgcnError::InvalidGraph(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if num_labels == 0 {
            return Err(MlgcnError::InvalidGraph("label count must be at least 1".into()));
        }
        if let Some((v, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l == 0 || l > num_labels)
        {
            return Err(MlgcnError::InvalidGraph(format!(
                "node {v} has label {l}, expected 1..={num_labels}"
            )));
        }
        let mut seen = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(MlgcnError::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(MlgcnError::InvalidGraph(format!("self-loop on node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(MlgcnError::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(Graph {
            features,
            labels,
            num_labels,
            edges: seen.into_iter().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn feature(&self, v: usize) -> ArrayView1<'_, f64> {
        self.features.row(v)
    }

    /// Labels in `1..=num_labels`.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// 0/1 adjacency indicator, symmetric with zero diagonal.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::zeros((n, n));
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    /// Sorted neighbor lists.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.n()];
        for &(u, v) in &self.edges {
            lists[u].push(v);
            lists[v].push(u);
        }
        for list in &mut lists {
            list.sort_unstable();
        }
        lists
    }

    /// Hop distances from `source`, `None` where unreachable.
    pub fn bfs_distances(&self, source: usize, neighbors: &[Vec<usize>]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].expect("queued nodes have a distance");
            for &w in &neighbors[u] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if perm.len() != n || check.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(MlgcnError::Parameter(format!(
                "not a permutation of 0..{n}"
            )));
        }
        let mut features = Array2::zeros(self.features.raw_dim());
        let mut labels = vec![0; n];
        for v in 0..n {
            features.row_mut(perm[v]).assign(&self.features.row(v));
            labels[perm[v]] = self.labels[v];
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        Graph::new(features, labels, self.num_labels, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.n(), self.feature_dim(), self.num_labels);
        for v in 0..self.n() {
            let _ = write!(out, "{}", self.labels[v]);
            for x in self.features.row(v) {
                let _ = write!(out, " {x:e}");
            }
            out.push('\n');
        }
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    /// Parses the text layout; `origin` only labels error messages.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, detail: String| MlgcnError::Parse {
            path: origin.to_path_buf(),
            line,
            detail,
        };
        let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
            let content = raw.split('#').next().unwrap_or("").trim();
            (!content.is_empty()).then_some((i + 1, content))
        });

        let (header_line, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header `n p L`".into()))?;
        let header: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(header_line, format!("bad header: {e}")))?;
        let &[n, p, num_labels] = header.as_slice() else {
            return Err(parse_err(
                header_line,
                format!("header needs 3 fields `n p L`, found {}", header.len()),
            ));
        };
        if n == 0 {
            return Err(MlgcnError::EmptyGraph);
        }

        let mut features = Array2::zeros((n, p));
        let mut labels = Vec::with_capacity(n);
        for v in 0..n {
            let (line_no, line) = lines
                .next()
                .ok_or_else(|| parse_err(header_line, format!("expected {n} node lines, found {v}")))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != p + 1 {
                return Err(parse_err(
                    line_no,
                    format!("node line needs {} fields, found {}", p + 1, tokens.len()),
                ));
            }
            let label = tokens[0]
                .parse::<usize>()
                .map_err(|e| parse_err(line_no, format!("bad label `{}`: {e}", tokens[0])))?;
            labels.push(label);
            for (j, token) in tokens[1..].iter().enumerate() {
                features[[v, j]] = token
                    .parse::<f64>()
                    .map_err(|e| parse_err(line_no, format!("bad feature `{token}`: {e}")))?;
            }
        }

        let mut edges = Vec::new();
        for (line_no, line) in lines {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(parse_err(line_no, format!("edge line needs 2 fields, found {}", tokens.len())));
            }
            let parse_node = |t: &str| {
                t.parse::<usize>()
                    .map_err(|e| parse_err(line_no, format!("bad node index `{t}`: {e}")))
            };
            edges.push((parse_node(tokens[0])?, parse_node(tokens[1])?));
        }
        Graph::new(features, labels, num_labels, edges).map_err(|e| match e {
            MlgcnError::InvalidGraph(detail) => parse_err(header_line, detail),
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MlgcnError::io(path, e))?;
        Graph::from_text(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| MlgcnError::io(path, e))
    }
}
