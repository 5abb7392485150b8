//! Versioned JSON checkpoints for every model kind.

use crate::config::ModelKind;
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_json};
use reflect_core::baselines::{AnalogyModel, MlpTransfer};
use reflect_core::dataset::{AttributeDataset, NonAttributeSet, Split};
use reflect_core::eval::WordTransfer;
use reflect_core::reflection::{Mirror, RefModel};
use reflect_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "reflect-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelState {
    Reflection(RefModel),
    Mlp(MlpTransfer),
    Analogy(AnalogyModel),
}

impl ModelState {
    pub fn dim(&self) -> usize {
        match self {
            ModelState::Reflection(m) => m.dim(),
            ModelState::Mlp(m) => m.dim(),
            ModelState::Analogy(m) => m.diff().d.len(),
        }
    }

    /// The mirror applied to `v`, for reflection models.
    pub fn mirror_for(&self, v: &[f64]) -> Option<reflect_core::Result<Mirror>> {
        match self {
            ModelState::Reflection(m) => Some(m.mirror_for(Some(v))),
            _ => None,
        }
    }

    pub fn as_reflection(&self) -> Option<&RefModel> {
        match self {
            ModelState::Reflection(m) => Some(m),
            _ => None,
        }
    }
}

impl WordTransfer for ModelState {
    fn transfer_word(&self, token: &str, v: &[f64]) -> reflect_core::Result<Vec<f64>> {
        match self {
            ModelState::Reflection(m) => m.transfer_word(token, v),
            ModelState::Mlp(m) => m.transfer_word(token, v),
            ModelState::Analogy(m) => m.transfer_word(token, v),
        }
    }
}

/// Where the parameters came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the training pairs and non-attribute training words.
    pub train_set_sha256: String,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub non_attribute_train: usize,
    pub vocab_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub attribute: String,
    pub dim: usize,
    pub model: ModelState,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    pub seed: u64,
    pub steps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ck: Checkpoint = read_json(path)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!(
                "{}: not a checkpoint (format `{}`)",
                path.display(),
                ck.format
            )));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                path.display(),
                ck.version
            )));
        }
        if ck.model.dim() != ck.dim {
            return Err(Error::Data(format!(
                "{}: model dimension {} does not match declared {}",
                path.display(),
                ck.model.dim(),
                ck.dim
            )));
        }
        Ok(ck)
    }
}

/// Hash of the training data, independent of file layout.
pub fn train_set_hash(dataset: &AttributeDataset, non_attribute: &NonAttributeSet) -> String {
    let mut h = Sha256::new();
    h.update(dataset.attribute.as_bytes());
    h.update(b"\n");
    for p in dataset.pairs(Split::Train) {
        h.update(p.source.as_bytes());
        h.update(b"\t");
        h.update(p.target.as_bytes());
        h.update(b"\n");
    }
    h.update(b"#non-attribute\n");
    for w in &non_attribute.train {
        h.update(w.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
