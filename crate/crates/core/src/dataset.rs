//! Labelled graph collections and their on-disk manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlgcnError, Result};
use crate::graph::Graph;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub graph: Graph,
    pub class: usize,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub file: String,
    pub class: usize,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub class_names: Vec<String>,
    pub num_labels: usize,
    pub feature_dim: usize,
    /// Joint label names, index `l - 1` for label `l`; may be empty.
    #[serde(default)]
    pub label_names: Vec<String>,
    pub graphs: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub num_labels: usize,
    pub feature_dim: usize,
    pub label_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(class_names: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| MlgcnError::Ingest("dataset has no graphs".into()))?;
        let feature_dim = first.graph.feature_dim();
        let mut num_labels = 0;
        for s in &samples {
            if s.graph.feature_dim() != feature_dim {
                return Err(MlgcnError::Ingest(format!(
                    "graph {} has {}-dim features, expected {feature_dim}",
                    s.name,
                    s.graph.feature_dim()
                )));
            }
            if s.class >= class_names.len() {
                return Err(MlgcnError::Ingest(format!(
                    "graph {} has class {} but only {} classes are declared",
                    s.name,
                    s.class,
                    class_names.len()
                )));
            }
            num_labels = num_labels.max(s.graph.num_labels());
        }
        Ok(Dataset {
            class_names,
            num_labels,
            feature_dim,
            label_names: Vec::new(),
            samples,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn max_nodes(&self) -> usize {
        self.samples.iter().map(|s| s.graph.n()).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Train and test indices. Samples with an explicit split keep it; the
    /// rest are split per class, holding out `round(test_fraction × count)`
    /// after a seeded shuffle.
    pub fn split_indices(&self, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(MlgcnError::Parameter(format!("test_fraction must lie in [0, 1), got {test_fraction}")));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for class in 0..self.num_classes() {
            let mut free = Vec::new();
            for (i, s) in self.samples.iter().enumerate().filter(|(_, s)| s.class == class) {
                match s.split {
                    Some(Split::Train) => train.push(i),
                    Some(Split::Test) => test.push(i),
                    None => free.push(i),
                }
            }
            free.shuffle(&mut rng);
            let held = (test_fraction * free.len() as f64).round() as usize;
            test.extend_from_slice(&free[..held]);
            train.extend_from_slice(&free[held..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }

    /// Writes one graph file per sample plus the manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| MlgcnError::io(dir, e))?;
        let mut graphs = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let file = format!("{}.graph", s.name);
            s.graph.save(&dir.join(&file))?;
            graphs.push(ManifestEntry {
                file,
                class: s.class,
                nodes: s.graph.n(),
                split: s.split,
            });
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            class_names: self.class_names.clone(),
            num_labels: self.num_labels,
            feature_dim: self.feature_dim,
            label_names: self.label_names.clone(),
            graphs,
        };
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| MlgcnError::io(&path, e))?;
        Ok(path)
    }

    /// Reads a manifest file, or `manifest.json` inside a directory.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&manifest_path).map_err(|e| MlgcnError::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| MlgcnError::Parse {
            path: manifest_path.clone(),
            line: e.line(),
            detail: e.to_string(),
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(MlgcnError::Ingest(format!(
                "{}: unsupported manifest version {}",
                manifest_path.display(),
                manifest.version
            )));
        }
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut samples = Vec::with_capacity(manifest.graphs.len());
        for entry in &manifest.graphs {
            let graph = Graph::load(&base.join(&entry.file))?;
            if graph.n() != entry.nodes {
                return Err(MlgcnError::Ingest(format!(
                    "{}: manifest lists {} nodes, file has {}",
                    entry.file,
                    entry.nodes,
                    graph.n()
                )));
            }
            let name = entry.file.strip_suffix(".graph").unwrap_or(&entry.file).to_string();
            samples.push(Sample {
                name,
                graph,
                class: entry.class,
                split: entry.split,
            });
        }
        let mut data = Dataset::new(manifest.class_names, samples)?;
        if data.feature_dim != manifest.feature_dim {
            return Err(MlgcnError::Ingest(format!(
                "manifest declares {}-dim features, graphs have {}",
                manifest.feature_dim, data.feature_dim
            )));
        }
        if data.num_labels > manifest.num_labels {
            return Err(MlgcnError::Ingest(format!(
                "graphs use {} labels, manifest declares {}",
                data.num_labels, manifest.num_labels
            )));
        }
        data.num_labels = manifest.num_labels;
        data.label_names = manifest.label_names;
        Ok(data)
    }
}
