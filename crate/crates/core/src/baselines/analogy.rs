use crate::dataset::WordPair;
use crate::embedding::EmbeddingTable;
use crate::eval::WordTransfer;
use crate::vector::{add, check_dim, sub};
use crate::{Error, Result};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Which column of the pair files a word came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    M,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

/// Explicit per-word side labels, built only from pair lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTable {
    sides: BTreeMap<String, Side>,
}

impl KnowledgeTable {
    /// First column is `M`, second `F`. A word on both sides is an error.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a WordPair>) -> Result<Self> {
        let mut kt = KnowledgeTable::default();
        for p in pairs {
            kt.insert(&p.source, Side::M)?;
            kt.insert(&p.target, Side::F)?;
        }
        Ok(kt)
    }

    pub fn insert(&mut self, token: &str, side: Side) -> Result<()> {
        match self.sides.get(token) {
            Some(&s) if s != side => Err(Error::invalid(format!(
                "`{token}` is labelled with both attribute sides"
            ))),
            _ => {
                self.sides.insert(token.into(), side);
                Ok(())
            }
        }
    }

    pub fn side(&self, token: &str) -> Option<Side> {
        self.sides.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.sides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }
}

/// `d = v_m - v_w`, with the pair it came from when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceVector {
    pub d: Vec<f64>,
    pub source_pair: Option<(String, String)>,
}

/// `v_x - d` for an `M` word, `v_x + d` for an `F` word.
pub fn analogy_transfer(v_x: &[f64], d: &DifferenceVector, side: Side) -> Result<Vec<f64>> {
    check_dim(d.d.len(), v_x)?;
    Ok(match side {
        Side::M => sub(v_x, &d.d),
        Side::F => add(v_x, &d.d),
    })
}

/// `v_x + d` or `v_x - d` for every word, with no side knowledge.
pub fn analogy_transfer_fixed(v_x: &[f64], d: &DifferenceVector, sign: FixedSign) -> Result<Vec<f64>> {
    check_dim(d.d.len(), v_x)?;
    Ok(match sign {
        FixedSign::Plus => add(v_x, &d.d),
        FixedSign::Minus => sub(v_x, &d.d),
    })
}

fn pair_vectors<'t>(table: &'t EmbeddingTable, p: &WordPair) -> Option<(&'t [f64], &'t [f64])> {
    Some((table.lookup(&p.source).ok()?, table.lookup(&p.target).ok()?))
}

/// Knowledge-based accuracy of `d` over both directions of `pairs`.
fn knowledge_hits(d: &DifferenceVector, pairs: &[WordPair], table: &EmbeddingTable, knowledge: &KnowledgeTable) -> usize {
    let mut hits = 0;
    for p in pairs {
        for (x, t) in [(&p.source, &p.target), (&p.target, &p.source)] {
            let (Ok(v), Some(side), Some(ti)) = (table.lookup(x), knowledge.side(x), table.index_of(t)) else {
                continue;
            };
            let hit = analogy_transfer(v, d, side)
                .and_then(|y| table.nearest_index(&y))
                .map(|(i, _)| i == ti)
                .unwrap_or(false);
            hits += hit as usize;
        }
    }
    hits
}

/// The training-pair difference vector with the best knowledge-based accuracy
/// on `val_pairs`; earliest training pair wins ties.
pub fn select_diff(
    train_pairs: &[WordPair],
    val_pairs: &[WordPair],
    table: &EmbeddingTable,
    knowledge: &KnowledgeTable,
) -> Result<DifferenceVector> {
    let candidates: Vec<DifferenceVector> = train_pairs
        .iter()
        .filter_map(|p| {
            let (m, w) = pair_vectors(table, p)?;
            Some(DifferenceVector {
                d: sub(m, w),
                source_pair: Some((p.source.clone(), p.target.clone())),
            })
        })
        .collect();
    let scores: Vec<usize> = candidates
        .iter()
        .map(|d| knowledge_hits(d, val_pairs, table, knowledge))
        .collect();
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best.map(|i| candidates[i].clone())
        .ok_or_else(|| Error::invalid("no training pair is resolvable in the embedding table"))
}

/// Mean difference vector and how many pairs were skipped for missing tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDiff {
    pub diff: DifferenceVector,
    pub skipped: usize,
}

/// `(1/n) Σ (v_m - v_w)` over resolvable pairs. Each coordinate is summed in
/// sorted order, so the result does not depend on pair order.
pub fn mean_diff(train_pairs: &[WordPair], table: &EmbeddingTable) -> Result<MeanDiff> {
    let diffs: Vec<Vec<f64>> = train_pairs
        .iter()
        .filter_map(|p| pair_vectors(table, p).map(|(m, w)| sub(m, w)))
        .collect();
    let skipped = train_pairs.len() - diffs.len();
    if skipped > 0 {
        log::warn!("mean difference: skipped {skipped} pairs with out-of-vocabulary tokens");
    }
    if diffs.is_empty() {
        return Err(Error::invalid("no training pair is resolvable in the embedding table"));
    }
    let n = diffs.len() as f64;
    let d = (0..table.dim())
        .map(|k| {
            let mut col: Vec<f64> = diffs.iter().map(|v| v[k]).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / n
        })
        .collect();
    Ok(MeanDiff {
        diff: DifferenceVector { d, source_pair: None },
        skipped,
    })
}

/// A difference-vector transfer, with explicit knowledge or a fixed sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AnalogyModel {
    Knowledge {
        diff: DifferenceVector,
        knowledge: KnowledgeTable,
    },
    Fixed {
        diff: DifferenceVector,
        sign: FixedSign,
    },
}

impl AnalogyModel {
    pub fn diff(&self) -> &DifferenceVector {
        match self {
            AnalogyModel::Knowledge { diff, .. } | AnalogyModel::Fixed { diff, .. } => diff,
        }
    }
}

impl WordTransfer for AnalogyModel {
    fn transfer_word(&self, token: &str, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            AnalogyModel::Knowledge { diff, knowledge } => {
                let side = knowledge
                    .side(token)
                    .ok_or_else(|| Error::KnowledgeRequired(token.into()))?;
                analogy_transfer(v, diff, side)
            }
            AnalogyModel::Fixed { diff, sign } => analogy_transfer_fixed(v, diff, *sign),
        }
    }
}
