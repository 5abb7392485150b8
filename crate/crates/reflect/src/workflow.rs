//! The steps behind each command, usable without the CLI.

use crate::checkpoint::{train_set_hash, Checkpoint, ModelState, Provenance, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use crate::config::{is_antonym, ModelKind, RunConfig};
use crate::embeddings::{load_embeddings, save_subset};
use crate::error::{Error, Result};
use crate::fsutil::write_json;
use crate::pairs::{load_dataset, load_word_list, write_pairs, write_word_list, SplitManifest};
use crate::report::ReportDocument;
use reflect_core::baselines::{mean_diff, select_diff, AnalogyModel, FixedSign, KnowledgeTable, MlpTransfer};
use reflect_core::dataset::{sample_non_attribute, AttributeDataset, NonAttributeSet, Split};
use reflect_core::embedding::EmbeddingTable;
use reflect_core::eval::{evaluate, WordTransfer};
use reflect_core::neural::{grad_check, GradCheckOptions, GradCheckReport, Parameters};
use reflect_core::reflection::{AttributeVector, Mirror, RefModel};
use reflect_core::synth::{SyntheticData, SyntheticSpec};
use reflect_core::training::{train, EpochRecord, LossBatch, LossWeights, StopReason, TrainData, Trainable};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Everything a run reads: the table, the pair splits and the non-attribute words.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: EmbeddingTable,
    pub dataset: AttributeDataset,
    pub non_attribute: NonAttributeSet,
    /// Planted mirrors when the data is synthetic.
    pub ground_truth: Option<Vec<Mirror>>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    if let Some(spec) = &cfg.synthetic {
        let mut spec = spec.clone();
        spec.attribute = cfg.attribute.clone();
        let data = reflect_core::synth::synth_generate(&spec)?;
        return Ok(Prepared {
            table: data.table,
            dataset: data.dataset,
            non_attribute: data.non_attribute,
            ground_truth: Some(data.mirrors),
        });
    }
    let src = cfg.embeddings.as_ref().expect("validated");
    let table = load_embeddings(&src.path, src.limit)?;
    let manifest = cfg.split.as_ref().expect("validated");
    let dataset = load_dataset(&cfg.attribute, cfg.pairs.as_deref(), manifest)?;
    let na = &cfg.non_attribute;
    let non_attribute = match (&na.train_file, &na.test_file) {
        (None, None) => sample_non_attribute(&table, &dataset, na.n_train, na.n_test, na.seed)?,
        (train, test) => {
            let sampled = if train.is_none() || test.is_none() {
                Some(sample_non_attribute(&table, &dataset, na.n_train, na.n_test, na.seed)?)
            } else {
                None
            };
            let pick = |file: &Option<std::path::PathBuf>, fallback: fn(&NonAttributeSet) -> &Vec<String>| -> Result<Vec<String>> {
                match file {
                    Some(p) => load_word_list(p),
                    None => Ok(fallback(sampled.as_ref().expect("sampled")).clone()),
                }
            };
            NonAttributeSet {
                attribute: cfg.attribute.clone(),
                train: pick(train, |s| &s.train)?,
                test: pick(test, |s| &s.test)?,
            }
        }
    };
    Ok(Prepared {
        table,
        dataset,
        non_attribute,
        ground_truth: None,
    })
}

/// A fitted model plus its training trace.
#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// `None` for models computed in closed form.
    pub stop: Option<StopReason>,
}

impl Trained {
    pub fn diverged(&self) -> Option<usize> {
        match self.stop {
            Some(StopReason::Diverged { epoch }) => Some(epoch),
            _ => None,
        }
    }
}

fn knowledge(dataset: &AttributeDataset) -> Result<KnowledgeTable> {
    let all = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .flat_map(|s| dataset.pairs(s).iter());
    Ok(KnowledgeTable::from_pairs(all)?)
}

pub fn train_model(cfg: &RunConfig, prep: &Prepared) -> Result<Trained> {
    let kind = cfg.model.kind;
    let table = &prep.table;
    let dim = table.dim();
    let hidden = cfg.hidden();
    let train_cfg = cfg.train_config();
    let data = TrainData::resolve(table, &prep.dataset, &prep.non_attribute);
    let attribute = AttributeVector::random(cfg.attribute.clone(), dim, cfg.seed, cfg.model.train_z);

    fn fit<M: Trainable + WordTransfer>(
        init: M,
        data: &TrainData<'_>,
        cfg: &reflect_core::training::TrainConfig,
    ) -> Result<(M, Vec<EpochRecord>, StopReason, u64, Option<usize>)> {
        let out = train(init, data, cfg)?;
        Ok((out.model, out.history, out.stop, out.steps, out.best_epoch))
    }

    let (model, history, stop, steps, best_epoch) = match kind {
        ModelKind::Ref | ModelKind::RefPm => {
            let init = RefModel::new(attribute, &hidden, kind == ModelKind::RefPm, cfg.seed)?;
            let (m, h, s, n, b) = fit(init, &data, &train_cfg)?;
            (ModelState::Reflection(m), h, Some(s), n, b)
        }
        ModelKind::Mlp => {
            let init = MlpTransfer::new(attribute, &hidden, cfg.seed)?;
            let (m, h, s, n, b) = fit(init, &data, &train_cfg)?;
            (ModelState::Mlp(m), h, Some(s), n, b)
        }
        ModelKind::Diff | ModelKind::DiffPlus | ModelKind::DiffMinus => {
            let kt = knowledge(&prep.dataset)?;
            let diff = select_diff(
                prep.dataset.pairs(Split::Train),
                prep.dataset.pairs(Split::Val),
                table,
                &kt,
            )?;
            let model = match kind {
                ModelKind::Diff => AnalogyModel::Knowledge { diff, knowledge: kt },
                ModelKind::DiffPlus => AnalogyModel::Fixed { diff, sign: FixedSign::Plus },
                _ => AnalogyModel::Fixed { diff, sign: FixedSign::Minus },
            };
            (ModelState::Analogy(model), Vec::new(), None, 0, None)
        }
        ModelKind::MeanDiff | ModelKind::MeanDiffPlus | ModelKind::MeanDiffMinus => {
            let diff = mean_diff(prep.dataset.pairs(Split::Train), table)?.diff;
            let model = match kind {
                ModelKind::MeanDiff => AnalogyModel::Knowledge {
                    diff,
                    knowledge: knowledge(&prep.dataset)?,
                },
                ModelKind::MeanDiffPlus => AnalogyModel::Fixed { diff, sign: FixedSign::Plus },
                _ => AnalogyModel::Fixed { diff, sign: FixedSign::Minus },
            };
            (ModelState::Analogy(model), Vec::new(), None, 0, None)
        }
    };
    let counts = prep.dataset.counts();
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        kind,
        attribute: cfg.attribute.clone(),
        dim,
        model,
        provenance: Provenance {
            train_set_sha256: train_set_hash(&prep.dataset, &prep.non_attribute),
            train_pairs: counts.train,
            val_pairs: counts.val,
            non_attribute_train: prep.non_attribute.train.len(),
            vocab_size: table.len(),
            embeddings: cfg.embeddings.as_ref().map(|e| e.path.display().to_string()),
        },
        train_config: kind.is_neural().then_some(train_cfg),
        seed: cfg.seed,
        steps,
        best_epoch,
    };
    Ok(Trained {
        checkpoint,
        history,
        stop,
    })
}

/// Every seed that influences a run, by role.
pub fn seeds(cfg: &RunConfig) -> BTreeMap<String, u64> {
    let mut s = BTreeMap::new();
    s.insert("init".to_string(), cfg.seed);
    s.insert("train".to_string(), cfg.train.seed);
    if let Some(spec) = &cfg.synthetic {
        s.insert("synthetic".to_string(), spec.seed);
    } else {
        if let Some(SplitManifest::Counts { seed, .. }) = &cfg.split {
            s.insert("split".to_string(), *seed);
        }
        if cfg.non_attribute.train_file.is_none() || cfg.non_attribute.test_file.is_none() {
            s.insert("non_attribute".to_string(), cfg.non_attribute.seed);
        }
    }
    s
}

/// The resolved config as recorded in reports; the output location is left out
/// so that it does not affect the report bytes.
pub fn config_snapshot(cfg: &RunConfig) -> serde_json::Value {
    let mut r = cfg.resolved();
    r.output_dir = None;
    serde_json::to_value(r).expect("serializable config")
}

pub fn evaluate_checkpoint(cfg: &RunConfig, prep: &Prepared, ck: &Checkpoint) -> Result<ReportDocument> {
    if ck.dim != prep.table.dim() {
        return Err(Error::Data(format!(
            "checkpoint dimension {} does not match embedding dimension {}",
            ck.dim,
            prep.table.dim()
        )));
    }
    let test = prep.dataset.triplets(Split::Test);
    let knowledge_based = ck.kind.uses_knowledge();
    let words: &[String] = if knowledge_based { &[] } else { &prep.non_attribute.test };
    let report = evaluate(&ck.model, &test, words, &prep.table);
    let mut doc = ReportDocument::new(&cfg.attribute, ck.kind, report, config_snapshot(cfg), seeds(cfg));
    if knowledge_based {
        doc.notes
            .push("stability is not defined for transfer that needs explicit side knowledge".into());
    }
    if is_antonym(&cfg.attribute) && !ck.kind.is_neural() {
        doc.notes
            .push("difference-vector baselines are not comparable on the antonym dataset".into());
    }
    if ck.attribute != cfg.attribute {
        doc.notes.push(format!(
            "checkpoint was trained for attribute `{}`",
            ck.attribute
        ));
    }
    Ok(doc)
}

/// One step of a (possibly chained) word transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub stage: usize,
    pub input: String,
    pub output: String,
    pub cosine: Option<f64>,
    pub mirror_distance: Option<f64>,
    pub oov: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Transfers each word through every model in turn; the token retrieved at one
/// stage is the input of the next. Lookup tries the word as written, then lowercased.
pub fn transfer_words(models: &[&ModelState], table: &EmbeddingTable, words: &[String]) -> Vec<Vec<TransferRow>> {
    words
        .iter()
        .map(|word| {
            let mut current = word.clone();
            let mut rows = Vec::with_capacity(models.len());
            for (stage, model) in models.iter().enumerate() {
                let key = if table.contains(&current) {
                    Some(current.clone())
                } else {
                    let lower = current.to_lowercase();
                    table.contains(&lower).then_some(lower)
                };
                let mut row = TransferRow {
                    stage,
                    input: current.clone(),
                    output: current.clone(),
                    cosine: None,
                    mirror_distance: None,
                    oov: key.is_none(),
                    error: None,
                };
                if let Some(k) = key {
                    let v = table.lookup(&k).expect("checked");
                    let step = model
                        .transfer_word(&k, v)
                        .and_then(|y| table.nearest_token(&y).map(|(t, s)| (t.to_string(), s)));
                    match step {
                        Ok((t, s)) => {
                            row.output = t;
                            row.cosine = Some(s);
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    }
                    if let Some(Ok(m)) = model.mirror_for(v) {
                        row.mirror_distance = m.distance(v).ok();
                    }
                }
                current = row.output.clone();
                rows.push(row);
            }
            rows
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSettings {
    pub dim: usize,
    pub hidden: usize,
    pub pairs: usize,
    pub non_attribute: usize,
    pub seed: u64,
    /// Double the largest analytic gradient coordinate before comparing.
    pub corrupt: bool,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            dim: 6,
            hidden: 8,
            pairs: 4,
            non_attribute: 3,
            seed: 0,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckResult {
    pub model: ModelKind,
    pub parameters: usize,
    pub checked: usize,
    pub max_relative_error: f64,
}

fn check_model<M: Trainable>(model: &M, batch: &LossBatch<'_>, corrupt: bool, seed: u64) -> Result<GradCheckReport> {
    let (_, mut grads) = model.batch_loss(batch)?;
    if corrupt {
        let flat = grads.flatten();
        if let Some((i, g)) = flat
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            grads.set_coord(i, 2.0 * g);
        }
    }
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    };
    let loss = |m: &M| m.batch_loss(batch).map(|(l, _)| l).unwrap_or(f64::NAN);
    Ok(grad_check(loss, model, &grads, &opts)?)
}

/// Finite-difference check of the full transfer loss (attribute and
/// non-attribute terms) on a seeded random instance.
pub fn gradcheck(kind: ModelKind, s: &GradCheckSettings) -> Result<GradCheckResult> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if !kind.is_neural() {
        return Err(Error::Usage(format!("`{kind}` has no trainable parameters to check")));
    }
    if s.dim == 0 || s.hidden == 0 {
        return Err(Error::Usage("gradcheck dimensions must be positive".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s.seed);
    let mut draw = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..s.dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    };
    let xs = draw(s.pairs);
    let ts = draw(s.pairs);
    let ns = draw(s.non_attribute);
    let batch = LossBatch::new(
        xs.iter().zip(&ts).map(|(x, t)| (x.as_slice(), t.as_slice())).collect(),
        ns.iter().map(Vec::as_slice).collect(),
        LossWeights::default(),
    );
    let attr = AttributeVector::random("gradcheck", s.dim, s.seed ^ 0x5EED, true);
    let hidden = [s.hidden];
    let (report, parameters) = match kind {
        ModelKind::Ref | ModelKind::RefPm => {
            let m = RefModel::new(attr, &hidden, kind == ModelKind::RefPm, s.seed)?;
            (check_model(&m, &batch, s.corrupt, s.seed)?, m.num_params())
        }
        _ => {
            let m = MlpTransfer::new(attr, &hidden, s.seed)?;
            (check_model(&m, &batch, s.corrupt, s.seed)?, m.num_params())
        }
    };
    Ok(GradCheckResult {
        model: kind,
        parameters,
        checked: report.checked,
        max_relative_error: report.max_relative_error,
    })
}

/// Writes a generated dataset in the standard file formats plus a run config
/// that reads them back. Returns that config.
pub fn write_synthetic(dir: &Path, spec: &SyntheticSpec, data: &SyntheticData) -> Result<RunConfig> {
    use crate::config::{EmbeddingSource, ModelSpec, NonAttributeSource, TrainSection};
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_subset(dir.join("embeddings.txt"), &data.table, None, true)?;
    let all: Vec<_> = data.pairs.iter().map(|(p, _)| p.clone()).collect();
    write_pairs(dir.join("pairs.tsv"), &all)?;
    write_pairs(dir.join("train.tsv"), data.dataset.pairs(Split::Train))?;
    write_pairs(dir.join("val.tsv"), data.dataset.pairs(Split::Val))?;
    write_pairs(dir.join("test.tsv"), data.dataset.pairs(Split::Test))?;
    write_word_list(dir.join("non_attribute_train.txt"), &data.non_attribute.train)?;
    write_word_list(dir.join("non_attribute_test.txt"), &data.non_attribute.test)?;
    crate::fsutil::write_atomic(&dir.join("clusters.tsv"), |w| {
        writeln!(w, "source\ttarget\tcluster")?;
        for (p, c) in &data.pairs {
            writeln!(w, "{}\t{}\t{c}", p.source, p.target)?;
        }
        Ok(())
    })?;
    crate::fsutil::write_atomic(&dir.join("mirrors.tsv"), |w| {
        write!(w, "cluster\tvector")?;
        for k in 0..spec.dim {
            write!(w, "\tx{k}")?;
        }
        writeln!(w)?;
        for (i, m) in data.mirrors.iter().enumerate() {
            for (name, v) in [("normal", m.normal()), ("point", m.point())] {
                write!(w, "{i}\t{name}")?;
                for x in v {
                    write!(w, "\t{x:?}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    })?;
    write_json(&dir.join("spec.json"), spec)?;
    let cfg = RunConfig {
        attribute: spec.attribute.clone(),
        embeddings: Some(EmbeddingSource {
            path: "embeddings.txt".into(),
            limit: None,
        }),
        pairs: None,
        split: Some(SplitManifest::Files {
            train: "train.tsv".into(),
            val: "val.tsv".into(),
            test: "test.tsv".into(),
        }),
        synthetic: None,
        non_attribute: NonAttributeSource {
            train_file: Some("non_attribute_train.txt".into()),
            test_file: Some("non_attribute_test.txt".into()),
            n_train: data.non_attribute.train.len(),
            n_test: data.non_attribute.test.len(),
            seed: 0,
        },
        model: ModelSpec {
            kind: ModelKind::Ref,
            hidden: None,
            train_z: true,
        },
        train: TrainSection::default(),
        seed: 0,
        output_dir: None,
    };
    write_json(&dir.join("config.json"), &cfg)?;
    Ok(cfg)
}
