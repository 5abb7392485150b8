//! Pre-trained embedding tables and exact cosine retrieval.

use crate::vector::{all_finite, check_dim, dot, norm};
use crate::{Error, Result};
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// Vocabulary plus one `dim`-dimensional vector per token, stored row-major.
///
/// Immutable once built; queries borrow rows directly.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
    norms: Vec<f64>,
    dim: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` rows. Row numbers in errors are 0-based.
    pub fn from_rows<I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        let mut table = EmbeddingTable {
            tokens: Vec::new(),
            index: BTreeMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
            dim,
        };
        for (row, (token, vector)) in rows.into_iter().enumerate() {
            check_dim(dim, &vector)?;
            if !all_finite(&vector) {
                return Err(Error::NonFinite("embedding row"));
            }
            if table.index.contains_key(&token) {
                return Err(Error::DuplicateToken { token, row });
            }
            table.index.insert(token.clone(), row);
            table.tokens.push(token);
            table.norms.push(norm(&vector));
            table.data.extend_from_slice(&vector);
        }
        if table.tokens.is_empty() {
            return Err(Error::EmptyTable);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Stored vector for `token`.
    pub fn lookup(&self, token: &str) -> Result<&[f64]> {
        self.index_of(token)
            .map(|i| self.vector(i))
            .ok_or_else(|| Error::UnknownToken(token.into()))
    }

    /// Rows in table order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .map(move |(i, t)| (t.as_str(), self.vector(i)))
    }

    /// Keeps only the first `limit` rows.
    pub fn truncated(&self, limit: usize) -> Result<Self> {
        let n = limit.min(self.len());
        Self::from_rows(
            self.dim,
            (0..n).map(|i| (self.tokens[i].clone(), self.vector(i).to_vec())),
        )
    }

    /// Sub-table holding `tokens` in the given order.
    pub fn subset<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Self> {
        let rows = tokens
            .iter()
            .map(|t| Ok((String::from(t.as_ref()), self.lookup(t.as_ref())?.to_vec())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(self.dim, rows)
    }

    /// Index and cosine of the row most similar to `query`, searching the whole
    /// vocabulary. Zero-norm rows are never candidates; ties go to the lowest index.
    pub fn nearest_index(&self, query: &[f64]) -> Result<(usize, f64)> {
        check_dim(self.dim, query)?;
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &rn) in self.norms.iter().enumerate() {
            if rn == 0.0 {
                continue;
            }
            let sim = dot(query, self.vector(i)) / (qn * rn);
            match best {
                Some((_, s)) if sim <= s => {}
                _ => best = Some((i, sim)),
            }
        }
        best.ok_or(Error::NoCandidates)
    }

    /// Token most similar to `query` by cosine similarity, with its similarity.
    pub fn nearest_token(&self, query: &[f64]) -> Result<(&str, f64)> {
        let (i, sim) = self.nearest_index(query)?;
        Ok((self.token(i), sim))
    }
}

/// Cosine similarity `u·v / (|u||v|)`, clamped into `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dim(u.len(), v)?;
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
