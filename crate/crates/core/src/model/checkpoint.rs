use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, ModelShape, SpectralConfig};
use super::Model;
use crate::autodiff::ParamSet;
use crate::error::{Error, Result};

const FORMAT: &str = "svdformer-checkpoint";
const VERSION: u32 = 1;

/// JSON document with a config header and named parameter tensors.
///
/// Values are written in shortest round-trip decimal form and parsed with
/// correct rounding, so a save/load cycle is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub shape: ModelShape,
    pub spectral: SpectralConfig,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(model: &Model, spectral: &SpectralConfig) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            model: model.config.clone(),
            shape: model.shape,
            spectral: spectral.clone(),
            params: model.params.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Rebuilds the model, validating every tensor shape.
    pub fn into_model(self) -> Result<Model> {
        let template = Model::new(self.model, self.shape, 0)?;
        template.with_params(self.params)
    }
}
