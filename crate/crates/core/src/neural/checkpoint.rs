use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::SequenceModel;
use crate::io::{read_json, write_json};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "hamflow-sequence-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing model file: architecture, direction and every parameter
/// written with 17 significant digits, so loading restores bit-identical
/// inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: SequenceModel,
    /// SHA-256 of the training configuration that produced the parameters.
    pub training_config_hash: String,
}

impl Checkpoint {
    pub fn new(model: SequenceModel, training_config_hash: String) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, model, training_config_hash }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "{} is not a version-{CHECKPOINT_VERSION} model checkpoint",
                path.display()
            )));
        }
        let model = SequenceModel::from_parts(ck.model.config().clone(), ck.model.params().to_vec())?;
        Ok(Self { model, ..ck })
    }
}
