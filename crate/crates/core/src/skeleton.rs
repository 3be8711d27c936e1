//! Skeleton sequences to trajectory graphs.
//!
//! A trajectory follows one joint of one person across frames. Its node
//! feature concatenates the mean coordinates over `C` equal slices of the
//! sequence duration, so the descriptor does not depend on frame rate.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{MlgcnError, Result};
use crate::graph::Graph;

/// One detected joint in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub person: usize,
    /// 1-based joint label.
    pub label: usize,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    /// `frames[t]` holds the detections of frame `t`.
    frames: Vec<Vec<Detection>>,
    dim: usize,
    pub fps: Option<f64>,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Vec<Detection>>, fps: Option<f64>) -> Result<Self> {
        let dim = frames
            .iter()
            .flatten()
            .map(|d| d.coords.len())
            .next()
            .ok_or_else(|| MlgcnError::Ingest("skeleton sequence has no detections".into()))?;
        if !(2..=3).contains(&dim) {
            return Err(MlgcnError::Ingest(format!("coordinates must be 2-D or 3-D, got {dim}-D")));
        }
        for (t, frame) in frames.iter().enumerate() {
            let mut seen = std::collections::BTreeSet::new();
            for d in frame {
                if d.coords.len() != dim {
                    return Err(MlgcnError::Ingest(format!(
                        "frame {t}: {}-D coordinates in a {dim}-D sequence",
                        d.coords.len()
                    )));
                }
                if d.label == 0 {
                    return Err(MlgcnError::Ingest(format!("frame {t}: joint labels start at 1")));
                }
                if d.coords.iter().any(|x| !x.is_finite()) {
                    return Err(MlgcnError::Ingest(format!("frame {t}: non-finite coordinate")));
                }
                if !seen.insert((d.person, d.label)) {
                    return Err(MlgcnError::Ingest(format!(
                        "frame {t}: person {} has joint {} twice",
                        d.person, d.label
                    )));
                }
            }
        }
        Ok(SkeletonSequence { frames, dim, fps })
    }

    pub fn frames(&self) -> &[Vec<Detection>] {
        &self.frames
    }

    pub fn total_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub person: usize,
    pub label: usize,
    /// Strictly increasing frame indices.
    pub samples: Vec<(usize, Vec<f64>)>,
}

impl Trajectory {
    pub fn centroid(&self) -> Vec<f64> {
        let dim = self.samples.first().map_or(0, |s| s.1.len());
        let mut mean = vec![0.0; dim];
        for (_, c) in &self.samples {
            for (m, x) in mean.iter_mut().zip(c) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.samples.len() as f64);
        mean
    }
}

/// One trajectory per `(person, label)` seen, ordered by that pair.
/// Missing detections are simply absent.
pub fn extract_trajectories(seq: &SkeletonSequence) -> Result<Vec<Trajectory>> {
    let mut tracks: BTreeMap<(usize, usize), Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        for d in frame {
            tracks.entry((d.person, d.label)).or_default().push((t, d.coords.clone()));
        }
    }
    if tracks.is_empty() {
        return Err(MlgcnError::Ingest("skeleton sequence has no detections".into()));
    }
    Ok(tracks
        .into_iter()
        .map(|((person, label), samples)| Trajectory { person, label, samples })
        .collect())
}

/// Per-chunk mean coordinates, concatenated: `chunks × d` values.
///
/// Frame `t` covers `[t/T, (t+1)/T)` of the duration and chunk `j` covers
/// `[j/C, (j+1)/C)`; a sample contributes to a chunk in proportion to the
/// overlap. When `C` divides `T` this is the plain assignment
/// `⌊t·C/T⌋`; otherwise it keeps the output unchanged when every frame is
/// repeated. A chunk no sample reaches takes the trajectory mean.
pub fn temporal_chunking(traj: &Trajectory, chunks: usize, total_frames: usize) -> Result<Vec<f64>> {
    if chunks == 0 || total_frames == 0 {
        return Err(MlgcnError::Parameter("chunk count and total frames must be positive".into()));
    }
    let first = traj
        .samples
        .first()
        .ok_or_else(|| MlgcnError::Ingest(format!("trajectory of joint {} is empty", traj.label)))?;
    let dim = first.1.len();
    if let Some((t, _)) = traj.samples.iter().find(|(t, _)| *t >= total_frames) {
        return Err(MlgcnError::Ingest(format!("frame {t} beyond sequence length {total_frames}")));
    }
    // integer time units of 1/(T·C)
    let (c, total) = (chunks as u128, total_frames as u128);
    let mut sums = vec![0.0; chunks * dim];
    let mut weights = vec![0u128; chunks];
    for (t, coords) in &traj.samples {
        let (start, end) = (*t as u128 * c, (*t as u128 + 1) * c);
        let first_chunk = (start / total) as usize;
        let last_chunk = ((end - 1) / total) as usize;
        for j in first_chunk..=last_chunk.min(chunks - 1) {
            let (lo, hi) = (j as u128 * total, (j as u128 + 1) * total);
            let overlap = end.min(hi) - start.max(lo);
            weights[j] += overlap;
            for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(coords) {
                *s += overlap as f64 * x;
            }
        }
    }
    let mean = traj.centroid();
    let mut out = vec![0.0; chunks * dim];
    for j in 0..chunks {
        let block = &mut out[j * dim..(j + 1) * dim];
        if weights[j] == 0 {
            block.copy_from_slice(&mean);
        } else {
            for (o, s) in block.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                *o = s / weights[j] as f64;
            }
        }
    }
    Ok(out)
}

/// Union of each point's `m` nearest neighbours (Euclidean, ties by index),
/// as canonical edges.
pub fn knn_edges(points: &Array2<f64>, m: usize) -> Vec<(usize, usize)> {
    let n = points.nrows();
    let mut edges = std::collections::BTreeSet::new();
    for v in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&u| u != v)
            .map(|u| {
                let d2 = points
                    .row(v)
                    .iter()
                    .zip(points.row(u))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d2, u)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, u) in others.iter().take(m) {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    edges.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphBuildConfig {
    pub chunks: usize,
    /// Nearest trajectories linked to each trajectory.
    pub neighbors: usize,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig { chunks: 4, neighbors: 3 }
    }
}

/// Trajectory graph: one node per trajectory with its chunked descriptor
/// and joint label, edges between centroid nearest neighbours.
pub fn build_trajectory_graph(
    trajectories: &[Trajectory],
    config: GraphBuildConfig,
    total_frames: usize,
    num_labels: usize,
) -> Result<Graph> {
    if trajectories.is_empty() {
        return Err(MlgcnError::Ingest("no trajectories to build a graph from".into()));
    }
    if config.neighbors == 0 {
        return Err(MlgcnError::Parameter("neighbor count must be at least 1".into()));
    }
    let dim = trajectories[0].samples.first().map_or(0, |s| s.1.len());
    let mut features = Array2::zeros((trajectories.len(), config.chunks * dim));
    let mut centroids = Array2::zeros((trajectories.len(), dim));
    for (v, traj) in trajectories.iter().enumerate() {
        let chunked = temporal_chunking(traj, config.chunks, total_frames)?;
        features.row_mut(v).assign(&ndarray::Array1::from(chunked));
        centroids.row_mut(v).assign(&ndarray::Array1::from(traj.centroid()));
    }
    let labels = trajectories.iter().map(|t| t.label).collect();
    Graph::new(features, labels, num_labels, knn_edges(&centroids, config.neighbors))
}

/// Column layout of a skeleton CSV file: an optional leading frame column,
/// then `persons × joints × dim` coordinates, person-major then joint-major.
/// An empty field marks a missing joint (all its coordinates must be empty).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvLayout {
    pub persons: usize,
    pub joints: usize,
    pub dim: usize,
    pub frame_column: bool,
    pub delimiter: char,
}

impl Default for CsvLayout {
    fn default() -> Self {
        CsvLayout {
            persons: 2,
            joints: 15,
            dim: 3,
            frame_column: true,
            delimiter: ',',
        }
    }
}

impl CsvLayout {
    pub fn columns(&self) -> usize {
        usize::from(self.frame_column) + self.persons * self.joints * self.dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.persons == 0 || self.joints == 0 || !(2..=3).contains(&self.dim) {
            return Err(MlgcnError::Parameter(format!(
                "invalid CSV layout: {} persons, {} joints, {}-D",
                self.persons, self.joints, self.dim
            )));
        }
        Ok(())
    }
}

/// Parses one skeleton CSV. Frame numbers, when present, must increase;
/// skipped numbers become empty frames.
pub fn read_skeleton_csv(text: &str, layout: &CsvLayout, origin: &Path) -> Result<SkeletonSequence> {
    layout.validate()?;
    let parse_err = |line: usize, detail: String| MlgcnError::Parse {
        path: origin.to_path_buf(),
        line,
        detail,
    };
    let mut frames: Vec<Vec<Detection>> = Vec::new();
    let mut first_frame: Option<i64> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(layout.delimiter).map(str::trim).collect();
        if fields.len() != layout.columns() {
            return Err(parse_err(
                line_no,
                format!("expected {} columns, found {}", layout.columns(), fields.len()),
            ));
        }
        let coords = if layout.frame_column {
            let frame: i64 = fields[0]
                .parse::<f64>()
                .ok()
                .filter(|f| f.fract() == 0.0)
                .map(|f| f as i64)
                .ok_or_else(|| parse_err(line_no, format!("bad frame number `{}`", fields[0])))?;
            let base = *first_frame.get_or_insert(frame);
            let index = frame - base;
            if index < frames.len() as i64 {
                return Err(parse_err(line_no, format!("frame {frame} does not increase")));
            }
            frames.resize_with(index as usize, Vec::new);
            &fields[1..]
        } else {
            &fields[..]
        };
        let mut detections = Vec::new();
        for person in 0..layout.persons {
            for joint in 0..layout.joints {
                let offset = (person * layout.joints + joint) * layout.dim;
                let cells = &coords[offset..offset + layout.dim];
                let missing = cells.iter().filter(|c| c.is_empty()).count();
                if missing == layout.dim {
                    continue;
                }
                if missing > 0 {
                    return Err(parse_err(line_no, format!("person {person} joint {} partly missing", joint + 1)));
                }
                let values = cells
                    .iter()
                    .map(|c| c.parse::<f64>().ok().filter(|x| x.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| parse_err(line_no, format!("bad coordinate for person {person} joint {}", joint + 1)))?;
                detections.push(Detection {
                    person,
                    label: joint + 1,
                    coords: values,
                });
            }
        }
        frames.push(detections);
    }
    if frames.is_empty() {
        return Err(parse_err(1, "no frames".into()));
    }
    SkeletonSequence::new(frames, None).map_err(|e| match e {
        MlgcnError::Ingest(detail) => parse_err(1, detail),
        other => other,
    })
}
