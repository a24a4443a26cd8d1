//! JSON checkpoint container. Floats are written in shortest round-trip form
//! and parsed with exact rounding, so reload is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Dense, MlpModel, MlpSpec};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            spec: model.spec().clone(),
            layers: model.layers().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<MlpModel> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        MlpModel::from_layers(self.spec, self.layers)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_checkpoint(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, Checkpoint::from_model(model).to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)?.into_model()
}
