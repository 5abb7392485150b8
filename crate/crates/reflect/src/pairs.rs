//! Pair TSV files, word lists and split manifests.

use crate::error::{Error, Result};
use crate::fsutil::{read_text, write_atomic};
use reflect_core::dataset::{AttributeDataset, SplitCounts, WordPair};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Content lines with their 1-based numbers; blank lines and `#` comments dropped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

/// Parses `source TAB target` lines.
pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<WordPair>> {
    content_lines(text)
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            match fields.as_slice() {
                [s, t] if !s.is_empty() && !t.is_empty() => Ok(WordPair::new(*s, *t)),
                _ => Err(Error::parse(
                    path,
                    n,
                    format!("expected `source<TAB>target`, found {:?}", line),
                )),
            }
        })
        .collect()
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<WordPair>> {
    let path = path.as_ref();
    parse_pairs(&read_text(path)?, path)
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[WordPair]) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        for p in pairs {
            writeln!(w, "{}\t{}", p.source, p.target)?;
        }
        Ok(())
    })
}

/// One token per line.
pub fn parse_word_list(text: &str, path: &Path) -> Result<Vec<String>> {
    content_lines(text)
        .map(|(n, line)| {
            let t = line.trim();
            if t.split_whitespace().nth(1).is_some() {
                Err(Error::parse(path, n, format!("expected a single token, found {t:?}")))
            } else {
                Ok(t.to_string())
            }
        })
        .collect()
}

pub fn load_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    parse_word_list(&read_text(path)?, path)
}

pub fn write_word_list(path: impl AsRef<Path>, words: &[String]) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        for t in words {
            writeln!(w, "{t}")?;
        }
        Ok(())
    })
}

/// How the pairs are divided into train/val/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitManifest {
    /// Seeded shuffle of one pair file into consecutive slices.
    Counts {
        train: usize,
        val: usize,
        test: usize,
        #[serde(default)]
        seed: u64,
    },
    /// One pair file per split, used as is.
    Files { train: PathBuf, val: PathBuf, test: PathBuf },
}

impl SplitManifest {
    pub fn counts(&self) -> Option<SplitCounts> {
        match *self {
            SplitManifest::Counts { train, val, test, .. } => Some(SplitCounts::new(train, val, test)),
            SplitManifest::Files { .. } => None,
        }
    }
}

/// Builds the dataset described by `manifest`. `pairs` is required for count splits.
pub fn load_dataset(attribute: &str, pairs: Option<&Path>, manifest: &SplitManifest) -> Result<AttributeDataset> {
    match manifest {
        SplitManifest::Counts { seed, .. } => {
            let path = pairs.ok_or_else(|| Error::Usage("a count split needs a pair file".into()))?;
            let all = load_pairs(path)?;
            let counts = manifest.counts().expect("count manifest");
            AttributeDataset::split(attribute, all, counts, *seed)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        }
        SplitManifest::Files { train, val, test } => Ok(AttributeDataset::from_splits(
            attribute,
            load_pairs(train)?,
            load_pairs(val)?,
            load_pairs(test)?,
        )?),
    }
}
