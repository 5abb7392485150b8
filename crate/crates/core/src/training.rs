//! Transfer loss, training loop and model selection on validation accuracy.

use crate::dataset::{AttributeDataset, NonAttributeSet, Split, Triplet};
use crate::embedding::EmbeddingTable;
use crate::eval::WordTransfer;
use crate::neural::{AdamConfig, AdamState, Parameters};
use crate::vector::check_dim;
use crate::{Error, Result};
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Weights of the attribute and non-attribute loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub attribute: f64,
    pub non_attribute: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            attribute: 1.0,
            non_attribute: 1.0,
        }
    }
}

/// One optimization batch: `(v_x, v_t)` pairs that must be transferred and
/// words that must stay put.
#[derive(Debug, Clone)]
pub struct LossBatch<'a> {
    pub attribute: Vec<(&'a [f64], &'a [f64])>,
    pub non_attribute: Vec<&'a [f64]>,
    pub weights: LossWeights,
}

impl<'a> LossBatch<'a> {
    pub fn new(
        attribute: Vec<(&'a [f64], &'a [f64])>,
        non_attribute: Vec<&'a [f64]>,
        weights: LossWeights,
    ) -> Self {
        LossBatch {
            attribute,
            non_attribute,
            weights,
        }
    }

    /// Per-item multipliers `w_A / |A|` and `w_N / |N|`; an empty term scales to 0.
    pub fn term_scales(&self) -> (f64, f64) {
        let scale = |w: f64, n: usize| if n == 0 { 0.0 } else { w / n as f64 };
        (
            scale(self.weights.attribute, self.attribute.len()),
            scale(self.weights.non_attribute, self.non_attribute.len()),
        )
    }
}

/// A differentiable word-to-vector transfer whose parameters Adam can update.
pub trait Trainable: Parameters + Clone {
    type Cache;

    fn forward_train(&self, v_x: &[f64]) -> Result<(Vec<f64>, Self::Cache)>;

    /// Accumulates into `grads` the parameter gradient given `dL/dv_y`.
    fn backward_train(&self, cache: &Self::Cache, grad_y: &[f64], grads: &mut Self) -> Result<()>;

    /// `w_A/|A| Σ |v_y - v_t|² + w_N/|N| Σ |v_y - v_x|²` and its gradient.
    fn batch_loss(&self, batch: &LossBatch<'_>) -> Result<(f64, Self)> {
        per_example_batch_loss(self, batch)
    }
}

pub(crate) fn per_example_batch_loss<M: Trainable>(model: &M, batch: &LossBatch<'_>) -> Result<(f64, M)> {
    let (wa, wn) = batch.term_scales();
    let mut grads = model.zeros_like();
    let mut total = 0.0;
    let items = batch
        .attribute
        .iter()
        .map(|&(x, t)| (x, t, wa))
        .chain(batch.non_attribute.iter().map(|&x| (x, x, wn)));
    for (x, t, w) in items {
        let (y, cache) = model.forward_train(x)?;
        check_dim(y.len(), t)?;
        let mut gy = Vec::with_capacity(y.len());
        for (yi, ti) in y.iter().zip(t) {
            let diff = yi - ti;
            total += w * diff * diff;
            gy.push(2.0 * w * diff);
        }
        model.backward_train(&cache, &gy, &mut grads)?;
    }
    Ok((total, grads))
}

/// Loss over token-level data. Unknown tokens are skipped and counted unless `strict`.
#[derive(Debug, Clone)]
pub struct LossValue<M> {
    pub value: f64,
    pub grads: M,
    pub skipped: usize,
}

pub fn loss<M: Trainable>(
    model: &M,
    triplets: &[Triplet],
    words: &[String],
    table: &EmbeddingTable,
    weights: LossWeights,
    strict: bool,
) -> Result<LossValue<M>> {
    let mut skipped = 0;
    let mut attribute = Vec::new();
    for t in triplets {
        match (table.lookup(&t.input), table.lookup(&t.target)) {
            (Ok(x), Ok(y)) => attribute.push((x, y)),
            (Err(e), _) | (_, Err(e)) => {
                if strict {
                    return Err(e);
                }
                skipped += 1;
            }
        }
    }
    let mut non_attribute = Vec::new();
    for w in words {
        match table.lookup(w) {
            Ok(x) => non_attribute.push(x),
            Err(e) if strict => return Err(e),
            Err(_) => skipped += 1,
        }
    }
    let (value, grads) = model.batch_loss(&LossBatch::new(attribute, non_attribute, weights))?;
    Ok(LossValue {
        value,
        grads,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            max_epochs: 2000,
            batch_size: 32,
            seed: 0,
            patience: 50,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

/// Training examples resolved to table rows.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub table: &'a EmbeddingTable,
    pub train: Vec<(usize, usize)>,
    pub non_attribute: Vec<usize>,
    pub val: Vec<(usize, usize)>,
    /// Tokens that could not be resolved and were dropped.
    pub skipped: usize,
}

impl<'a> TrainData<'a> {
    pub fn resolve(
        table: &'a EmbeddingTable,
        dataset: &AttributeDataset,
        non_attribute: &NonAttributeSet,
    ) -> Self {
        let mut skipped = 0;
        let mut pairs = |split: Split| -> Vec<(usize, usize)> {
            dataset
                .triplets(split)
                .iter()
                .filter_map(|t| match (table.index_of(&t.input), table.index_of(&t.target)) {
                    (Some(x), Some(y)) => Some((x, y)),
                    _ => {
                        skipped += 1;
                        None
                    }
                })
                .collect()
        };
        let train = pairs(Split::Train);
        let val = pairs(Split::Val);
        let non_attribute: Vec<usize> = non_attribute
            .train
            .iter()
            .filter_map(|w| {
                let i = table.index_of(w);
                if i.is_none() {
                    skipped += 1;
                }
                i
            })
            .collect();
        if skipped > 0 {
            log::warn!("skipped {skipped} training items with out-of-vocabulary tokens");
        }
        TrainData {
            table,
            train,
            non_attribute,
            val,
            skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    /// Non-finite loss or gradient in this epoch; the returned model predates it.
    Diverged { epoch: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters with the best validation accuracy (earliest on ties), or the
    /// last completed epoch when there is no validation data.
    pub model: M,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
    pub steps: u64,
    pub stop: StopReason,
}

/// Fraction of `(x, t)` rows whose transferred `x` lands nearest to `t`.
/// Transfer failures count as misses.
pub fn accuracy_on_rows<M: WordTransfer>(model: &M, table: &EmbeddingTable, rows: &[(usize, usize)]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let hits = rows
        .iter()
        .filter(|&&(x, t)| {
            model
                .transfer_word(table.token(x), table.vector(x))
                .and_then(|y| table.nearest_index(&y))
                .map(|(i, _)| i == t)
                .unwrap_or(false)
        })
        .count();
    Some(hits as f64 / rows.len() as f64)
}

/// Minibatch Adam over the directed training triplets; every step also sees
/// the non-attribute words (all of them, or a sample of `batch_size` when larger).
pub fn train<M>(init: M, data: &TrainData<'_>, config: &TrainConfig) -> Result<TrainOutcome<M>>
where
    M: Trainable + WordTransfer,
{
    config.validate()?;
    let table = data.table;
    let mut model = init;
    let mut adam = AdamState::for_params(config.adam, &model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, M)> = None;
    let mut last_good = model.clone();
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut diverged = false;
        let chunks: Vec<&[usize]> = if order.is_empty() {
            // nothing to transfer; still fit the non-attribute term
            if data.non_attribute.is_empty() {
                Vec::new()
            } else {
                alloc::vec![&[][..]]
            }
        } else {
            order.chunks(config.batch_size).collect()
        };
        for chunk in chunks {
            let attribute = chunk
                .iter()
                .map(|&k| {
                    let (x, t) = data.train[k];
                    (table.vector(x), table.vector(t))
                })
                .collect();
            let non_attribute: Vec<&[f64]> = if data.non_attribute.len() <= config.batch_size {
                data.non_attribute.iter().map(|&i| table.vector(i)).collect()
            } else {
                data.non_attribute
                    .choose_multiple(&mut rng, config.batch_size)
                    .map(|&i| table.vector(i))
                    .collect()
            };
            let batch = LossBatch::new(attribute, non_attribute, config.loss_weights);
            let (value, grads) = model.batch_loss(&batch)?;
            if !value.is_finite() {
                diverged = true;
                break;
            }
            match adam.step(&mut model, &grads) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            loss_sum += value;
            batches += 1;
        }
        if diverged {
            log::warn!("training diverged in epoch {epoch}");
            stop = StopReason::Diverged { epoch };
            model = last_good.clone();
            break;
        }
        let val_accuracy = accuracy_on_rows(&model, table, &data.val);
        history.push(EpochRecord {
            epoch,
            loss: if batches == 0 { 0.0 } else { loss_sum / batches as f64 },
            val_accuracy,
        });
        last_good = model.clone();
        if let Some(acc) = val_accuracy {
            let improved = best.as_ref().is_none_or(|(b, _, _)| acc > *b);
            if improved {
                best = Some((acc, epoch, model.clone()));
            } else if config.patience > 0 {
                let since = epoch - best.as_ref().map_or(0, |(_, e, _)| *e);
                if since >= config.patience {
                    stop = StopReason::EarlyStopping;
                    break;
                }
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, Some(e)),
        None => (model, None),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
        steps: adam.t,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reflection::{AttributeVector, RefModel};
    use alloc::vec;

    /// y = x + b, the smallest possible trainable transfer.
    #[derive(Debug, Clone, PartialEq)]
    struct Shift(Vec<f64>);

    impl Parameters for Shift {
        fn visit(&self, f: &mut dyn FnMut(&[f64])) {
            f(&self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
            f(&mut self.0)
        }
    }

    impl Trainable for Shift {
        type Cache = ();
        fn forward_train(&self, v: &[f64]) -> Result<(Vec<f64>, ())> {
            Ok((v.iter().zip(&self.0).map(|(a, b)| a + b).collect(), ()))
        }
        fn backward_train(&self, _: &(), gy: &[f64], grads: &mut Self) -> Result<()> {
            for (g, x) in grads.0.iter_mut().zip(gy) {
                *g += x;
            }
            Ok(())
        }
    }

    #[test]
    fn exact_model_has_zero_loss() {
        let x = [1.0, 2.0];
        let t = [2.0, 3.0];
        let m = Shift(vec![1.0, 1.0]);
        let b = LossBatch::new(vec![(&x[..], &t[..])], vec![], LossWeights::default());
        assert_eq!(m.batch_loss(&b).unwrap().0, 0.0);
    }

    #[test]
    fn identity_on_non_attribute_only_is_zero() {
        let w = [[0.3, 0.1], [5.0, -1.0]];
        let m = Shift(vec![0.0, 0.0]);
        let b = LossBatch::new(vec![], w.iter().map(|r| &r[..]).collect(), LossWeights::default());
        let (l, g) = m.batch_loss(&b).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.0, vec![0.0, 0.0]);
    }

    #[test]
    fn single_pair_loss_by_hand() {
        // v_y = (1, 0), v_t = (0, 1): |(1, -1)|² = 2
        let x = [1.0, 0.0];
        let t = [0.0, 1.0];
        let m = Shift(vec![0.0, 0.0]);
        let b = LossBatch::new(vec![(&x[..], &t[..])], vec![], LossWeights::default());
        assert_eq!(m.batch_loss(&b).unwrap().0, 2.0);
    }

    #[test]
    fn terms_are_normalized_by_their_own_sizes() {
        let x = [0.0];
        let t = [1.0];
        let n1 = [2.0];
        let m = Shift(vec![1.0]);
        // A term: 0, N term: one word moved by 1 -> 1
        let b = LossBatch::new(vec![(&x[..], &t[..]); 3], vec![&n1[..]; 4], LossWeights::default());
        assert!((m.batch_loss(&b).unwrap().0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn token_loss_skips_or_rejects_unknown_tokens() {
        let table = EmbeddingTable::from_rows(
            1,
            vec![("a".into(), vec![1.0]), ("b".into(), vec![3.0])],
        )
        .unwrap();
        let trip = vec![
            Triplet::new("a", "b", "X"),
            Triplet::new("a", "zzz", "X"),
        ];
        let m = Shift(vec![0.0]);
        let lv = loss(&m, &trip, &[], &table, LossWeights::default(), false).unwrap();
        assert_eq!(lv.skipped, 1);
        assert_eq!(lv.value, 4.0);
        assert!(loss(&m, &trip, &[], &table, LossWeights::default(), true).is_err());
    }

    fn toy_table() -> EmbeddingTable {
        EmbeddingTable::from_rows(
            2,
            vec![
                ("m".into(), vec![1.0, 0.2]),
                ("w".into(), vec![-1.0, 0.2]),
                ("p".into(), vec![0.0, 1.0]),
                ("k".into(), vec![2.0, 0.5]),
                ("q".into(), vec![-2.0, 0.5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let table = toy_table();
        let ds = AttributeDataset::from_splits("MF", vec![crate::dataset::WordPair::new("m", "w")], vec![], vec![]).unwrap();
        let na = NonAttributeSet::default();
        let data = TrainData::resolve(&table, &ds, &na);
        let init = RefModel::new(AttributeVector::random("MF", 2, 0, true), &[4], false, 0).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(init.clone(), &data, &cfg).unwrap();
        assert_eq!(out.model, init);
        assert!(out.history.is_empty());
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let table = toy_table();
        let ds = AttributeDataset::from_splits(
            "MF",
            vec![crate::dataset::WordPair::new("m", "w")],
            vec![crate::dataset::WordPair::new("k", "q")],
            vec![],
        )
        .unwrap();
        let na = NonAttributeSet {
            attribute: "MF".into(),
            train: vec!["p".into()],
            test: vec![],
        };
        let data = TrainData::resolve(&table, &ds, &na);
        let cfg = TrainConfig {
            max_epochs: 30,
            adam: AdamConfig::with_alpha(1e-2),
            ..TrainConfig::default()
        };
        let init = RefModel::new(AttributeVector::random("MF", 2, 1, true), &[8], true, 4).unwrap();
        let a = train(init.clone(), &data, &cfg).unwrap();
        let b = train(init, &data, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.len(), 30);
        assert_eq!(a.steps, 30);
    }
}
