//! Accuracy and stability by nearest-neighbour retrieval, sentence-level
//! transfer, and the raw distance / mirror-parameter exports.

use crate::dataset::{AttributeDataset, Split, Triplet};
use crate::embedding::EmbeddingTable;
use crate::reflection::RefModel;
use crate::vector::distance;
use crate::{Error, Result};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Anything that maps a word vector to a transferred vector.
///
/// The token is passed along for transfers that consult explicit knowledge.
pub trait WordTransfer {
    fn transfer_word(&self, token: &str, v: &[f64]) -> Result<Vec<f64>>;
}

/// Leaves every vector where it is.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl WordTransfer for Identity {
    fn transfer_word(&self, _: &str, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }
}

impl WordTransfer for RefModel {
    fn transfer_word(&self, _: &str, v: &[f64]) -> Result<Vec<f64>> {
        self.transfer(v)
    }
}

impl<T: WordTransfer + ?Sized> WordTransfer for &T {
    fn transfer_word(&self, token: &str, v: &[f64]) -> Result<Vec<f64>> {
        (**self).transfer_word(token, v)
    }
}

/// 1 when the nearest vocabulary token to `v_y` is `target`. A zero vector
/// counts as a miss.
pub fn delta(table: &EmbeddingTable, v_y: &[f64], target: &str) -> Result<bool> {
    let t = table
        .index_of(target)
        .ok_or_else(|| Error::UnknownToken(target.into()))?;
    match table.nearest_index(v_y) {
        Ok((i, _)) => Ok(i == t),
        Err(Error::ZeroNorm) => {
            log::warn!("transferred vector for target `{target}` has zero norm");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub input: String,
    pub expected: String,
    pub predicted: Option<String>,
    pub similarity: Option<f64>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Number of candidate tokens searched.
    pub vocab_size: usize,
    /// `None` when there was nothing to score.
    pub accuracy: Option<f64>,
    pub stability: Option<f64>,
    pub attribute_items: Vec<ItemRecord>,
    pub non_attribute_items: Vec<ItemRecord>,
    /// Test items dropped because a token was missing from the table.
    pub skipped: usize,
}

/// Runs `f(0..n)`, in parallel when threads are available, keeping order.
#[cfg(feature = "std")]
fn map_ordered<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism()
        .map(|t| t.get())
        .unwrap_or(1)
        .min(n.max(1));
    if threads <= 1 || n < 64 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|k| s.spawn(move || (k * chunk..((k + 1) * chunk).min(n)).map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    })
}

#[cfg(not(feature = "std"))]
fn map_ordered<R>(n: usize, f: impl Fn(usize) -> R) -> Vec<R> {
    (0..n).map(f).collect()
}

fn score<T: WordTransfer>(model: &T, table: &EmbeddingTable, input: &str, expected: &str) -> ItemRecord {
    let mut rec = ItemRecord {
        input: input.to_string(),
        expected: expected.to_string(),
        predicted: None,
        similarity: None,
        correct: false,
    };
    let Ok(v) = table.lookup(input) else {
        return rec;
    };
    match model.transfer_word(input, v) {
        Ok(y) => match table.nearest_index(&y) {
            Ok((i, sim)) => {
                rec.predicted = Some(table.token(i).to_string());
                rec.similarity = Some(sim);
                rec.correct = table.token(i) == expected;
            }
            Err(e) => log::warn!("no nearest token for transferred `{input}`: {e}"),
        },
        Err(e) => log::warn!("transfer of `{input}` failed: {e}"),
    }
    rec
}

fn mean_correct(items: &[ItemRecord]) -> Option<f64> {
    if items.is_empty() {
        None
    } else {
        Some(items.iter().filter(|r| r.correct).count() as f64 / items.len() as f64)
    }
}

/// Accuracy over directed attribute triplets and stability over non-attribute words.
pub fn evaluate<T: WordTransfer + Sync>(
    model: &T,
    attribute_test: &[Triplet],
    non_attribute_test: &[String],
    table: &EmbeddingTable,
) -> EvalReport {
    let attr: Vec<&Triplet> = attribute_test
        .iter()
        .filter(|t| table.contains(&t.input) && table.contains(&t.target))
        .collect();
    let words: Vec<&String> = non_attribute_test.iter().filter(|w| table.contains(w)).collect();
    let skipped = attribute_test.len() - attr.len() + non_attribute_test.len() - words.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} test items with out-of-vocabulary tokens");
    }
    let attribute_items = map_ordered(attr.len(), |i| score(model, table, &attr[i].input, &attr[i].target));
    let non_attribute_items = map_ordered(words.len(), |i| score(model, table, words[i], words[i]));
    EvalReport {
        vocab_size: table.len(),
        accuracy: mean_correct(&attribute_items),
        stability: mean_correct(&non_attribute_items),
        attribute_items,
        non_attribute_items,
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextToken {
    pub input: String,
    pub output: String,
    pub oov: bool,
}

/// Transfers each whitespace-separated token on its own. Lookup tries the
/// token as written, then lowercased; unknown tokens pass through.
pub fn transfer_text<T: WordTransfer>(model: &T, table: &EmbeddingTable, text: &str) -> Vec<TextToken> {
    text.split_whitespace()
        .map(|tok| {
            let key = if table.contains(tok) {
                Some(tok.to_string())
            } else {
                let lower = tok.to_lowercase();
                table.contains(&lower).then_some(lower)
            };
            let output = key.as_deref().and_then(|k| {
                let v = table.lookup(k).ok()?;
                let y = model.transfer_word(k, v).ok()?;
                table.nearest_token(&y).ok().map(|(t, _)| t.to_string())
            });
            TextToken {
                input: tok.to_string(),
                oov: key.is_none(),
                output: output.unwrap_or_else(|| tok.to_string()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordKind {
    Attribute,
    NonAttribute,
}

/// One word's distance to its own mirror and, for attribute words, to its partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub token: String,
    pub kind: WordKind,
    pub pair_id: Option<usize>,
    pub target: Option<String>,
    pub mirror_distance: f64,
    pub target_distance: Option<f64>,
}

/// Rows for both members of every test pair, then every non-attribute test word.
pub fn export_distances(
    model: &RefModel,
    dataset: &AttributeDataset,
    non_attribute_test: &[String],
    table: &EmbeddingTable,
) -> Result<Vec<DistanceRow>> {
    let mut rows = Vec::new();
    for (id, pair) in dataset.pairs(Split::Test).iter().enumerate() {
        for (x, t) in [(&pair.source, &pair.target), (&pair.target, &pair.source)] {
            let vx = table.lookup(x)?;
            let vt = table.lookup(t)?;
            rows.push(DistanceRow {
                token: x.clone(),
                kind: WordKind::Attribute,
                pair_id: Some(id),
                target: Some(t.clone()),
                mirror_distance: model.mirror_for(Some(vx))?.distance(vx)?,
                target_distance: Some(distance(vx, vt)),
            });
        }
    }
    for w in non_attribute_test {
        let v = table.lookup(w)?;
        rows.push(DistanceRow {
            token: w.clone(),
            kind: WordKind::NonAttribute,
            pair_id: None,
            target: None,
            mirror_distance: model.mirror_for(Some(v))?.distance(v)?,
            target_distance: None,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorRow {
    pub token: String,
    pub pair_id: Option<usize>,
    pub normal: Vec<f64>,
}

/// Mirror normal `a` for each `(word, pair id)`. A single-mirror model gives
/// every word the same row.
pub fn export_mirror_params(
    model: &RefModel,
    words: &[(String, Option<usize>)],
    table: &EmbeddingTable,
) -> Result<Vec<MirrorRow>> {
    if !model.parameterized {
        log::warn!("single-mirror model: every exported row holds the same normal");
    }
    words
        .iter()
        .map(|(w, id)| {
            let v = table.lookup(w)?;
            Ok(MirrorRow {
                token: w.clone(),
                pair_id: *id,
                normal: model.mirror_for(Some(v))?.normal().to_vec(),
            })
        })
        .collect()
}

/// Test-pair words with pair ids, in the order the exports use.
pub fn test_pair_words(dataset: &AttributeDataset) -> Vec<(String, Option<usize>)> {
    dataset
        .pairs(Split::Test)
        .iter()
        .enumerate()
        .flat_map(|(i, p)| [(p.source.clone(), Some(i)), (p.target.clone(), Some(i))])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::WordPair;
    use crate::reflection::{AttributeVector, Mirror};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn toy() -> EmbeddingTable {
        EmbeddingTable::from_rows(
            2,
            vec![
                ("a".into(), vec![1.0, 0.0]),
                ("b".into(), vec![0.0, 1.0]),
                ("c".into(), vec![-1.0, 0.2]),
            ],
        )
        .unwrap()
    }

    /// Maps each known input vector to a fixed output.
    struct Lookup(BTreeMap<String, Vec<f64>>);

    impl WordTransfer for Lookup {
        fn transfer_word(&self, token: &str, v: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.get(token).cloned().unwrap_or_else(|| v.to_vec()))
        }
    }

    #[test]
    fn delta_examples() {
        let t = toy();
        assert!(delta(&t, &[0.0, 1.0], "b").unwrap());
        // (0.9, 0.3) is nearer a than b
        assert!(!delta(&t, &[0.9, 0.3], "b").unwrap());
        assert!(delta(&t, t.lookup("c").unwrap(), "c").unwrap());
        assert!(!delta(&t, &[0.0, 0.0], "a").unwrap());
        assert!(delta(&t, &[1.0, 0.0], "zzz").is_err());
    }

    #[test]
    fn identity_is_stable_and_never_accurate() {
        let t = toy();
        let test = vec![Triplet::new("a", "b", "X"), Triplet::new("b", "a", "X")];
        let words: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let r = evaluate(&Identity, &test, &words, &t);
        assert_eq!(r.stability, Some(1.0));
        assert_eq!(r.accuracy, Some(0.0));
        assert_eq!(r.vocab_size, 3);
    }

    #[test]
    fn oracle_transfer_is_fully_accurate() {
        let t = toy();
        let test = vec![Triplet::new("a", "c", "X"), Triplet::new("c", "a", "X")];
        let m = Lookup(BTreeMap::from([
            ("a".into(), t.lookup("c").unwrap().to_vec()),
            ("c".into(), t.lookup("a").unwrap().to_vec()),
        ]));
        let r = evaluate(&m, &test, &[], &t);
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.stability, None);
    }

    #[test]
    fn unknown_test_tokens_are_skipped() {
        let t = toy();
        let test = vec![Triplet::new("a", "zz", "X")];
        let r = evaluate(&Identity, &test, &["qq".into()], &t);
        assert_eq!(r.skipped, 2);
        assert_eq!(r.accuracy, None);
    }

    #[test]
    fn text_transfer_passthrough_and_identity() {
        let t = toy();
        let out = transfer_text(&Identity, &t, "x y  z");
        assert!(out.iter().all(|o| o.oov && o.input == o.output));
        let out = transfer_text(&Identity, &t, "A b q");
        let words: Vec<_> = out.iter().map(|o| o.output.as_str()).collect();
        assert_eq!(words, vec!["a", "b", "q"]);
        assert_eq!(out.iter().map(|o| o.oov).collect::<Vec<_>>(), vec![false, false, true]);
    }

    fn axis_model(dim: usize) -> RefModel {
        use crate::neural::{Activation, DenseLayer, Mlp};
        let layer = |bias: Vec<f64>| {
            Mlp::from_layers(vec![DenseLayer {
                bias,
                ..DenseLayer::zeros(dim, dim, Activation::Identity)
            }])
            .unwrap()
        };
        let mut a = vec![0.0; dim];
        a[0] = 1.0;
        RefModel::from_parts(
            AttributeVector::random("X", dim, 0, false),
            layer(a),
            layer(vec![0.0; dim]),
            false,
        )
        .unwrap()
    }

    #[test]
    fn distance_export_geometry_and_row_count() {
        let h = 0.75;
        let table = EmbeddingTable::from_rows(
            2,
            vec![
                ("m".into(), vec![h, 1.0]),
                ("w".into(), vec![-h, 1.0]),
                ("n".into(), vec![0.0, 2.0]),
            ],
        )
        .unwrap();
        let ds = AttributeDataset::from_splits("X", vec![], vec![], vec![WordPair::new("m", "w")]).unwrap();
        let model = axis_model(2);
        let rows = export_distances(&model, &ds, &["n".into()], &table).unwrap();
        assert_eq!(rows.len(), 2 * 1 + 1);
        assert_eq!(rows[0].mirror_distance, h);
        assert_eq!(rows[1].mirror_distance, h);
        assert_eq!(rows[0].target_distance, Some(2.0 * h));
        assert_eq!(rows[2].mirror_distance, 0.0);
        assert_eq!(rows[2].kind, WordKind::NonAttribute);
    }

    #[test]
    fn single_mirror_export_repeats_one_normal() {
        let table = toy();
        let ds = AttributeDataset::from_splits("X", vec![], vec![], vec![WordPair::new("a", "b")]).unwrap();
        let model = axis_model(2);
        let rows = export_mirror_params(&model, &test_pair_words(&ds), &table).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].pair_id, rows[1].pair_id);
        assert_eq!(rows[0].normal, rows[1].normal);
        assert_eq!(rows[0].normal.len(), 2);
        let m = Mirror::new(rows[0].normal.clone(), vec![0.0; 2]).unwrap();
        assert_eq!(m.normal(), &[1.0, 0.0]);
    }
}
