//! Attribute pair datasets, directed triplets and non-attribute word samples.

use crate::embedding::EmbeddingTable;
use crate::{Error, Result};
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Undirected attribute pair; `source` is the first column of the pair file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WordPair {
    pub source: String,
    pub target: String,
}

impl WordPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        WordPair {
            source: source.into(),
            target: target.into(),
        }
    }

    fn key(&self) -> (&str, &str) {
        if self.source <= self.target {
            (&self.source, &self.target)
        } else {
            (&self.target, &self.source)
        }
    }
}

/// Directed example `(x, t, z)`: transferring `input` under `attribute` should yield `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub input: String,
    pub target: String,
    pub attribute: String,
}

impl Triplet {
    pub fn new(input: impl Into<String>, target: impl Into<String>, attribute: impl Into<String>) -> Self {
        Triplet {
            input: input.into(),
            target: target.into(),
            attribute: attribute.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        SplitCounts { train, val, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDataset {
    pub attribute: String,
    train: Vec<WordPair>,
    val: Vec<WordPair>,
    test: Vec<WordPair>,
}

impl AttributeDataset {
    /// Dataset from explicit splits; the same undirected pair may appear only once overall.
    pub fn from_splits(
        attribute: impl Into<String>,
        train: Vec<WordPair>,
        val: Vec<WordPair>,
        test: Vec<WordPair>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in train.iter().chain(&val).chain(&test) {
            if p.source == p.target {
                return Err(Error::invalid(format!("pair `{}` maps a word to itself", p.source)));
            }
            if !seen.insert(p.key()) {
                return Err(Error::invalid(format!(
                    "pair ({}, {}) appears more than once",
                    p.source, p.target
                )));
            }
        }
        Ok(AttributeDataset {
            attribute: attribute.into(),
            train,
            val,
            test,
        })
    }

    /// Seeded shuffle of `pairs`, then consecutive train/val/test slices of the given sizes.
    pub fn split(
        attribute: impl Into<String>,
        pairs: Vec<WordPair>,
        counts: SplitCounts,
        seed: u64,
    ) -> Result<Self> {
        if counts.total() > pairs.len() {
            return Err(Error::invalid(format!(
                "split counts {}+{}+{} exceed the {} available pairs",
                counts.train,
                counts.val,
                counts.test,
                pairs.len()
            )));
        }
        let mut pairs = pairs;
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut it = pairs.into_iter();
        let train = it.by_ref().take(counts.train).collect();
        let val = it.by_ref().take(counts.val).collect();
        let test = it.by_ref().take(counts.test).collect();
        Self::from_splits(attribute, train, val, test)
    }

    pub fn pairs(&self, split: Split) -> &[WordPair] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn counts(&self) -> SplitCounts {
        SplitCounts::new(self.train.len(), self.val.len(), self.test.len())
    }

    /// Both directions of every pair in `split`: `m → w` followed by `w → m`.
    pub fn triplets(&self, split: Split) -> Vec<Triplet> {
        self.pairs(split)
            .iter()
            .flat_map(|p| {
                [
                    Triplet::new(&*p.source, &*p.target, &*self.attribute),
                    Triplet::new(&*p.target, &*p.source, &*self.attribute),
                ]
            })
            .collect()
    }

    /// Every token that occurs in any split.
    pub fn tokens(&self) -> BTreeSet<&str> {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .flat_map(|p| [p.source.as_str(), p.target.as_str()])
            .collect()
    }
}

/// Words without the attribute, which transfer must leave unchanged.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonAttributeSet {
    pub attribute: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Uniform seeded sample of table tokens outside the pair lists.
///
/// The test words are drawn first so that they do not depend on `n_train`.
/// When the vocabulary cannot supply `n_test` words after the training
/// words, the test set is shortened.
pub fn sample_non_attribute(
    table: &EmbeddingTable,
    dataset: &AttributeDataset,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<NonAttributeSet> {
    let excluded = dataset.tokens();
    let mut candidates: Vec<&str> = table
        .tokens()
        .iter()
        .map(String::as_str)
        .filter(|t| !excluded.contains(t))
        .collect();
    if candidates.len() < n_train {
        return Err(Error::InsufficientVocabulary {
            needed: n_train,
            available: candidates.len(),
        });
    }
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_len = n_test.min(candidates.len() - n_train);
    if test_len < n_test {
        log::warn!("non-attribute test set shortened to {test_len} (requested {n_test})");
    }
    let test = candidates[..test_len].iter().map(|s| String::from(*s)).collect();
    let train = candidates[test_len..test_len + n_train]
        .iter()
        .map(|s| String::from(*s))
        .collect();
    Ok(NonAttributeSet {
        attribute: dataset.attribute.clone(),
        train,
        test,
    })
}
