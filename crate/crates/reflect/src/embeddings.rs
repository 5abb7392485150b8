//! word2vec/GloVe-style text embeddings: `token f1 … fD` per line, with an
//! optional `|V| D` header.

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use reflect_core::embedding::EmbeddingTable;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub fn load_embeddings(path: impl AsRef<Path>, limit: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), path, limit)
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let (v, d) = (it.next()?, it.next()?);
    if it.next().is_some() {
        return None;
    }
    Some((v.parse().ok()?, d.parse().ok()?))
}

/// Parses embedding text from `reader`; `path` is only used in error messages.
///
/// A first line of exactly two unsigned integers is taken as the header.
/// Blank lines are ignored.
pub fn read_embeddings<R: BufRead>(reader: R, path: &Path, limit: Option<usize>) -> Result<EmbeddingTable> {
    if limit == Some(0) {
        return Err(Error::Usage("vocabulary limit must be positive".into()));
    }
    let mut header: Option<(usize, usize, usize)> = None;
    let mut dim: Option<usize> = None;
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut truncated = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if rows.is_empty() && header.is_none() && dim.is_none() {
            if let Some((v, d)) = parse_header(&line) {
                if v == 0 || d == 0 {
                    return Err(Error::parse(path, lineno, "header declares an empty table"));
                }
                header = Some((v, d, lineno));
                dim = Some(d);
                continue;
            }
        }
        if limit.is_some_and(|l| rows.len() >= l) {
            truncated = true;
            break;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .enumerate()
            .map(|(k, f)| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                Ok(_) => Err(Error::parse(path, lineno, format!("non-finite value `{f}` in field {}", k + 1))),
                Err(_) => Err(Error::parse(path, lineno, format!("non-numeric field {} `{f}`", k + 1))),
            })
            .collect::<Result<_>>()?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::parse(
                path,
                lineno,
                format!("dimension mismatch: expected {d} values, found {}", values.len()),
            ));
        }
        if let Some(first) = seen.insert(token.clone(), lineno) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate token `{token}` (first seen on line {first})"),
            ));
        }
        rows.push((token, values));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no embedding rows", path.display())));
    }
    if let Some((v, _, lineno)) = header {
        if rows.len() > v || (!truncated && rows.len() != v) {
            return Err(Error::parse(
                path,
                lineno,
                format!("header declares {v} rows but the file has {}", if truncated { "more".to_string() } else { rows.len().to_string() }),
            ));
        }
    }
    let d = dim.unwrap_or_default();
    Ok(EmbeddingTable::from_rows(d, rows)?)
}

/// Formats a value with 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `table` (or the listed tokens of it, in that order) in the text format,
/// with a header line when `header` is set.
pub fn write_embeddings<W: Write>(mut out: W, table: &EmbeddingTable, tokens: Option<&[String]>, header: bool) -> Result<(), std::io::Error> {
    let indices: Vec<usize> = match tokens {
        Some(ts) => ts.iter().filter_map(|t| table.index_of(t)).collect(),
        None => (0..table.len()).collect(),
    };
    if header {
        writeln!(out, "{} {}", indices.len(), table.dim())?;
    }
    for i in indices {
        out.write_all(table.token(i).as_bytes())?;
        for &x in table.vector(i) {
            write!(out, " {}", format_value(x))?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Saves a subset of `table` atomically. Unknown tokens are an error.
pub fn save_subset(path: impl AsRef<Path>, table: &EmbeddingTable, tokens: Option<&[String]>, header: bool) -> Result<()> {
    if let Some(ts) = tokens {
        for t in ts {
            table.lookup(t)?;
        }
    }
    write_atomic(path.as_ref(), |w| write_embeddings(w, table, tokens, header))
}
