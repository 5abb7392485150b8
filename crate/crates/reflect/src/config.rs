//! Run configuration: data sources, model kind, training hyperparameters.

use crate::error::{Error, Result};
use crate::pairs::SplitManifest;
use reflect_core::neural::AdamConfig;
use reflect_core::synth::SyntheticSpec;
use reflect_core::training::{LossWeights, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "ref")]
    Ref,
    #[serde(rename = "refpm")]
    RefPm,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "diff")]
    Diff,
    #[serde(rename = "diff+")]
    DiffPlus,
    #[serde(rename = "diff-")]
    DiffMinus,
    #[serde(rename = "meandiff")]
    MeanDiff,
    #[serde(rename = "meandiff+")]
    MeanDiffPlus,
    #[serde(rename = "meandiff-")]
    MeanDiffMinus,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Ref,
        ModelKind::RefPm,
        ModelKind::Mlp,
        ModelKind::Diff,
        ModelKind::DiffPlus,
        ModelKind::DiffMinus,
        ModelKind::MeanDiff,
        ModelKind::MeanDiffPlus,
        ModelKind::MeanDiffMinus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ref => "ref",
            ModelKind::RefPm => "refpm",
            ModelKind::Mlp => "mlp",
            ModelKind::Diff => "diff",
            ModelKind::DiffPlus => "diff+",
            ModelKind::DiffMinus => "diff-",
            ModelKind::MeanDiff => "meandiff",
            ModelKind::MeanDiffPlus => "meandiff+",
            ModelKind::MeanDiffMinus => "meandiff-",
        }
    }

    /// Trained by gradient descent, as opposed to computed from pair vectors.
    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Ref | ModelKind::RefPm | ModelKind::Mlp)
    }

    pub fn is_reflection(self) -> bool {
        matches!(self, ModelKind::Ref | ModelKind::RefPm)
    }

    /// Needs side labels for every input word, so stability is not defined.
    pub fn uses_knowledge(self) -> bool {
        matches!(self, ModelKind::Diff | ModelKind::MeanDiff)
    }

    pub fn default_hidden(self) -> Vec<usize> {
        match self {
            ModelKind::Ref | ModelKind::RefPm => vec![300],
            ModelKind::Mlp => vec![300, 300],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown model kind `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// True for the antonym dataset, which trains with a larger step size.
pub fn is_antonym(attribute: &str) -> bool {
    matches!(attribute.to_ascii_lowercase().as_str(), "an" | "antonym" | "antonyms")
}

pub fn default_alpha(attribute: &str) -> f64 {
    if is_antonym(attribute) {
        1.5e-3
    } else {
        1e-4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

/// Non-attribute words come from files when given, otherwise from a seeded
/// sample of the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonAttributeSource {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_file: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for NonAttributeSource {
    fn default() -> Self {
        NonAttributeSource {
            train_file: None,
            test_file: None,
            n_train: 10,
            n_test: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Hidden layer widths; defaults depend on the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    /// Whether the attribute vector `z` is learned along with the MLPs.
    #[serde(default = "yes")]
    pub train_z: bool,
}

fn yes() -> bool {
    true
}

/// Optimizer and loop settings. `alpha` defaults per dataset when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            alpha: None,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            patience: t.patience,
            seed: t.seed,
            loss_weights: t.loss_weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<EmbeddingSource>,
    /// Pair file for count splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitManifest>,
    /// Generate the data instead of reading it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub non_attribute: NonAttributeSource,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainSection,
    /// Seed for model initialization and the attribute vector.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: RunConfig = crate::fsutil::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(e) = &mut self.embeddings {
            fix(&mut e.path);
        }
        if let Some(p) = &mut self.pairs {
            fix(p);
        }
        if let Some(SplitManifest::Files { train, val, test }) = &mut self.split {
            fix(train);
            fix(val);
            fix(test);
        }
        if let Some(p) = &mut self.non_attribute.train_file {
            fix(p);
        }
        if let Some(p) = &mut self.non_attribute.test_file {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let file_mode = self.embeddings.is_some() || self.pairs.is_some() || self.split.is_some();
        match (&self.synthetic, file_mode) {
            (Some(spec), false) => spec.validate()?,
            (Some(_), true) => {
                return Err(Error::Usage(
                    "config mixes `synthetic` with `embeddings`/`pairs`/`split`".into(),
                ))
            }
            (None, _) => {
                if self.embeddings.is_none() {
                    return Err(Error::Usage("config needs `embeddings` or `synthetic`".into()));
                }
                match &self.split {
                    None => return Err(Error::Usage("config needs a `split` manifest".into())),
                    Some(SplitManifest::Counts { .. }) if self.pairs.is_none() => {
                        return Err(Error::Usage("a count split needs `pairs`".into()))
                    }
                    _ => {}
                }
            }
        }
        if self.embeddings.as_ref().is_some_and(|e| e.limit == Some(0)) {
            return Err(Error::Usage("embedding limit must be positive".into()));
        }
        if self.hidden().contains(&0) {
            return Err(Error::Usage("hidden widths must be positive".into()));
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.model
            .hidden
            .clone()
            .unwrap_or_else(|| self.model.kind.default_hidden())
    }

    pub fn alpha(&self) -> f64 {
        self.train.alpha.unwrap_or_else(|| default_alpha(&self.attribute))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            adam: AdamConfig {
                alpha: self.alpha(),
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            seed: t.seed,
            patience: t.patience,
            loss_weights: t.loss_weights,
        }
    }

    /// Copy with every default written out and paths made absolute, so the
    /// result reproduces the run on its own.
    pub fn resolved(&self) -> RunConfig {
        let mut cfg = self.clone();
        cfg.train.alpha = Some(self.alpha());
        cfg.model.hidden = Some(self.hidden());
        if let Ok(cwd) = std::env::current_dir() {
            cfg.rebase(&cwd);
        }
        cfg
    }
}
