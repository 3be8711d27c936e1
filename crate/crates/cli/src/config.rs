//! Run configuration: one TOML file, overridden by command-line flags.
//!
//! ```toml
//! seed = 0
//! out = "runs/demo"
//! data = "data/manifest.json"
//!
//! [model]                      # architecture
//! pooling = "expand_gp"
//! [[model.menu]]               # one table per elementary laplacian
//! family = "normalized"
//! kind = "binary"
//!
//! [train]                      # optimisation
//! [ingest]                     # csv layout, graph building, synthetic task
//! [gradcheck]
//! [certify]
//! ```
//!
//! Every section and key is optional; absent keys take their defaults.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use mlgcn::model::ModelConfig;
use mlgcn::multilap::SimplexJacobian;
use mlgcn::skeleton::{CsvLayout, GraphBuildConfig};
use mlgcn::synthetic::SyntheticConfig;
use mlgcn::train::TrainConfig;
use mlgcn::{MlgcnError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestFormat {
    Csv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub format: IngestFormat,
    /// Directory with one sub-directory of sequence files per class.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// File extensions read as sequences.
    pub extensions: Vec<String>,
    pub layout: CsvLayout,
    pub graph: GraphBuildConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            format: IngestFormat::Csv,
            input: None,
            extensions: vec!["csv".into(), "txt".into()],
            layout: CsvLayout::default(),
            graph: GraphBuildConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianChoice {
    Exact,
    /// Deliberately wrong rule, for checking the checker.
    CollapsedNormalizer,
}

impl From<JacobianChoice> for SimplexJacobian {
    fn from(choice: JacobianChoice) -> Self {
        match choice {
            JacobianChoice::Exact => SimplexJacobian::Exact,
            JacobianChoice::CollapsedNormalizer => SimplexJacobian::CollapsedNormalizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub jacobian: JacobianChoice,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            step: mlgcn::gradcheck::DEFAULT_STEP,
            tolerance: mlgcn::gradcheck::DEFAULT_TOLERANCE,
            jacobian: JacobianChoice::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub tolerance: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            tolerance: mlgcn::cpd::DEFAULT_CPD_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Dataset manifest, or a directory holding `manifest.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub ingest: IngestConfig,
    pub gradcheck: GradcheckConfig,
    pub certify: CertifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            data: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            ingest: IngestConfig::default(),
            gradcheck: GradcheckConfig::default(),
            certify: CertifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| MlgcnError::Usage(format!("{}: {}", origin.display(), e.to_string().trim_end())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MlgcnError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Train settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| MlgcnError::Usage("no dataset given: pass --data or set `data` in the config".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mlgcn::laplacian::{AffinityKind, LaplacianDescriptor, LaplacianFamily};
    use mlgcn::model::PoolingMode;

    #[test]
    fn default_round_trips() {
        let config = RunConfig::default();
        let text = config.to_toml();
        assert_eq!(RunConfig::from_toml(&text, Path::new("x")).unwrap(), config);
    }

    #[test]
    fn awkward_values_round_trip() {
        let mut config = RunConfig {
            seed: u64::from(u32::MAX) * 3,
            data: Some("d/manifest.json".into()),
            ..RunConfig::default()
        };
        config.model.menu = vec![
            LaplacianDescriptor::new(LaplacianFamily::RandomWalk, AffinityKind::BinaryGaussian, 32, 1e-6),
            LaplacianDescriptor::new(LaplacianFamily::Normalized, AffinityKind::Binary, 4, 1e6),
        ];
        config.model.pooling = PoolingMode::FeatpropGp;
        config.train.learning_rate = 0.1 + 0.2;
        config.ingest.layout.delimiter = ';';
        config.gradcheck.jacobian = JacobianChoice::CollapsedNormalizer;
        let back = RunConfig::from_toml(&config.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_files_fill_defaults_and_unknown_keys_fail() {
        let text = "seed = 4\n[model]\npooling = \"gp\"\n[[model.menu]]\nfamily = \"unnormalized\"\nkind = \"binary\"\n";
        let config = RunConfig::from_toml(text, Path::new("x")).unwrap();
        assert_eq!(config.seed, 4);
        assert_eq!(config.model.menu.len(), 1);
        assert_eq!(config.model.menu[0].power, 1);
        assert_eq!(config.train, TrainConfig::default());
        assert!(RunConfig::from_toml("sed = 4\n", Path::new("x")).is_err());
        assert!(RunConfig::from_toml("[train]\nseed = 4\n", Path::new("x")).is_err());
    }
}
