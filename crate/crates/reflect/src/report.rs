//! Serialized evaluation reports and TSV exports.

use crate::config::ModelKind;
use crate::error::Result;
use crate::fsutil::{to_json_string, write_atomic};
use reflect_core::eval::{DistanceRow, EvalReport, ItemRecord, MirrorRow, WordKind};
use reflect_core::training::EpochRecord;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemSet {
    Attribute,
    NonAttribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub set: ItemSet,
    #[serde(flatten)]
    pub record: ItemRecord,
}

/// The on-disk evaluation report. Field order and float formatting are fixed,
/// so identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub attribute: String,
    pub model_kind: ModelKind,
    pub vocab_size: usize,
    pub accuracy: Option<f64>,
    pub stability: Option<f64>,
    pub attribute_count: usize,
    pub non_attribute_count: usize,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub items: Vec<ReportItem>,
    pub config_snapshot: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
}

impl ReportDocument {
    pub fn new(
        attribute: &str,
        model_kind: ModelKind,
        report: EvalReport,
        config_snapshot: serde_json::Value,
        seeds: BTreeMap<String, u64>,
    ) -> Self {
        let attribute_count = report.attribute_items.len();
        let non_attribute_count = report.non_attribute_items.len();
        let items = report
            .attribute_items
            .into_iter()
            .map(|record| ReportItem {
                set: ItemSet::Attribute,
                record,
            })
            .chain(report.non_attribute_items.into_iter().map(|record| ReportItem {
                set: ItemSet::NonAttribute,
                record,
            }))
            .collect();
        ReportDocument {
            attribute: attribute.to_string(),
            model_kind,
            vocab_size: report.vocab_size,
            accuracy: report.accuracy,
            stability: report.stability,
            attribute_count,
            non_attribute_count,
            skipped: report.skipped,
            notes: Vec::new(),
            items,
            config_snapshot,
            seeds,
        }
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_json();
        write_atomic(path.as_ref(), |w| w.write_all(text.as_bytes()))
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_distances<W: Write + ?Sized>(out: &mut W, rows: &[DistanceRow]) -> std::io::Result<()> {
    writeln!(out, "token\tkind\tpair_id\ttarget\tmirror_distance\ttarget_distance")?;
    for r in rows {
        let kind = match r.kind {
            WordKind::Attribute => "attribute",
            WordKind::NonAttribute => "non_attribute",
        };
        writeln!(
            out,
            "{}\t{kind}\t{}\t{}\t{}\t{}",
            r.token,
            opt(r.pair_id),
            r.target.as_deref().unwrap_or(""),
            num(r.mirror_distance),
            opt(r.target_distance.map(num)),
        )?;
    }
    Ok(())
}

pub fn write_mirrors<W: Write + ?Sized>(out: &mut W, rows: &[MirrorRow], dim: usize) -> std::io::Result<()> {
    write!(out, "token\tpair_id")?;
    for k in 0..dim {
        write!(out, "\ta{k}")?;
    }
    writeln!(out)?;
    for r in rows {
        write!(out, "{}\t{}", r.token, opt(r.pair_id))?;
        for &x in &r.normal {
            write!(out, "\t{}", num(x))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_history<W: Write + ?Sized>(out: &mut W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "epoch\tloss\tval_accuracy")?;
    for h in history {
        writeln!(out, "{}\t{}\t{}", h.epoch, num(h.loss), opt(h.val_accuracy.map(num)))?;
    }
    Ok(())
}

/// Writes TSV through `fill` to `path`, or to stdout when `path` is `None`.
pub fn emit_tsv<F>(path: Option<&Path>, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    match path {
        Some(p) => write_atomic(p, fill),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match fill(&mut lock).and_then(|_| lock.flush()) {
                // a closed pipe (`| head`) is not a failure of the export
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(crate::error::Error::io("<stdout>", e)),
                _ => Ok(()),
            }
        }
    }
}
