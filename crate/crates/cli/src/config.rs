//! The run configuration file: one JSON document per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use svdformer::autodiff::AdamConfig;
use svdformer::graph::{self, io, Dataset, SbmParams};
use svdformer::model::{ModelConfig, SpectralConfig};
use svdformer::training::TrainConfig;
use svdformer::Error;

/// Every block is optional except `dataset`; omitted fields take the defaults
/// printed by `svdformer train --help`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DatasetBlock {
    Synthetic(SyntheticBlock),
    Files(FilesBlock),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBlock {
    pub params: SbmParams,
    #[serde(default = "default_per_class_train")]
    pub per_class_train: usize,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
}

/// Paths are relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesBlock {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    /// Without a splits file, one is drawn per class with `split_seed`.
    #[serde(default)]
    pub splits: Option<PathBuf>,
    #[serde(default = "default_per_class_train")]
    pub per_class_train: usize,
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_per_class_train() -> usize {
    20
}

fn default_val_size() -> usize {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainBlock {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let train = TrainConfig::default();
        TrainBlock {
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            max_epochs: train.max_epochs,
            eval_every: train.eval_every,
            patience: train.patience,
            seeds: (0..10).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub checkpoint: bool,
    pub history: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: PathBuf::from("runs"),
            checkpoint: true,
            history: true,
        }
    }
}

pub struct LoadedConfig {
    pub config: RunConfig,
    /// Directory that relative dataset paths resolve against.
    pub base: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let config = RunConfig::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base })
    }

    pub fn parse(text: &str) -> Result<RunConfig, Error> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.train.seeds.is_empty() {
            return Err(Error::Config("train.seeds must list at least one seed".into()));
        }
        self.train_config(self.train.seeds[0]).validate()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            model: self.model.clone(),
            spectral: self.spectral.clone(),
            optimizer: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.adam_eps,
                weight_decay: t.weight_decay,
            },
            max_epochs: t.max_epochs,
            eval_every: t.eval_every,
            patience: t.patience,
            seed,
        }
    }

    /// First 12 hex digits of the SHA-256 of everything except the output block.
    pub fn hash(&self) -> String {
        let hashed = (&self.dataset, &self.model, &self.spectral, &self.train);
        let canonical = serde_json::to_vec(&hashed).expect("configs serialize");
        let digest = Sha256::digest(&canonical);
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

impl DatasetBlock {
    pub fn load(&self, base: &Path) -> Result<Dataset, Error> {
        match self {
            DatasetBlock::Synthetic(s) => {
                graph::generate_directed_sbm(&s.params, s.per_class_train, s.val_size)
            }
            DatasetBlock::Files(f) => f.load(base),
        }
    }
}

impl FilesBlock {
    fn load(&self, base: &Path) -> Result<Dataset, Error> {
        let resolve = |p: &Path| base.join(p);
        let labels_path = resolve(&self.labels);
        let text = fs::read_to_string(&labels_path).map_err(|e| Error::Io {
            path: labels_path.clone(),
            source: e,
        })?;
        let n = text.lines().filter(|l| !l.trim().is_empty()).count();
        let (labels, classes) = io::parse_labels(&text, n, &labels_path)?;
        let graph = io::load_edge_list(resolve(&self.edges), n)?;
        let features = io::load_features(resolve(&self.features), n)?;
        let split = match &self.splits {
            Some(p) => io::load_splits(resolve(p), n)?,
            None => graph::make_splits(&labels, self.per_class_train, self.val_size, self.split_seed)
                .map_err(|e| Error::Data {
                    path: labels_path.clone(),
                    message: e.to_string(),
                })?,
        };
        Dataset::new(graph, features, labels, classes, split).map_err(|e| Error::Data {
            path: labels_path,
            message: e.to_string(),
        })
    }
}
