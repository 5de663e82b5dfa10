//! N-gram embeddings: vocabulary construction, skip-gram training,
//! normalization, neighbor retrieval and cross-lingual mapping.

mod mapping;
mod neighbors;
mod skipgram;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use self::mapping::{map_embeddings, CrossMapping, MappingConfig, MappingReport, SeedInit};
pub use self::neighbors::{cosine_neighbors, csls_neighbors, knn_cosine, NeighborIndex};
pub use self::skipgram::{
    initial_embeddings, sample_loss_batch, train_ngram_embeddings, SkipGramConfig, SkipGramModel,
};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::linalg;

/// Per-order vocabulary cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramCutoffs {
    pub unigrams: usize,
    pub bigrams: usize,
    pub trigrams: usize,
}

impl Default for NGramCutoffs {
    fn default() -> Self {
        NGramCutoffs {
            unigrams: 200_000,
            bigrams: 400_000,
            trigrams: 400_000,
        }
    }
}

impl NGramCutoffs {
    fn for_order(&self, n: usize) -> usize {
        match n {
            1 => self.unigrams,
            2 => self.bigrams,
            3 => self.trigrams,
            _ => 0,
        }
    }
}

/// The unit of embedding: unigrams, bigrams and trigrams with their corpus
/// frequencies. Entries are stored unigrams first, then bigrams, then
/// trigrams; within an order by descending frequency, ties lexicographic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NGramVocabulary {
    entries: Vec<(Vec<String>, u64)>,
    index: HashMap<Vec<String>, usize>,
}

impl NGramVocabulary {
    pub fn build<'a, I>(corpus: I, cutoffs: NGramCutoffs) -> Self
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut counts: [HashMap<&[String], u64>; 3] = Default::default();
        for s in corpus {
            let toks = s.tokens();
            for n in 1..=3 {
                for w in toks.windows(n) {
                    *counts[n - 1].entry(w).or_default() += 1;
                }
            }
        }
        let mut entries = Vec::new();
        for (order_idx, map) in counts.into_iter().enumerate() {
            let mut items: Vec<(&[String], u64)> = map.into_iter().collect();
            items.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            items.truncate(cutoffs.for_order(order_idx + 1));
            entries.extend(items.into_iter().map(|(g, c)| (g.to_vec(), c)));
        }
        Self::from_entries(entries)
    }

    /// Wraps explicit entries; duplicate n-grams keep their first index.
    pub fn from_entries(entries: Vec<(Vec<String>, u64)>) -> Self {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (g, _)) in entries.iter().enumerate() {
            index.entry(g.clone()).or_insert(i);
        }
        NGramVocabulary { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, ngram: &[String]) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn ngram(&self, i: usize) -> &[String] {
        &self.entries[i].0
    }

    pub fn frequency(&self, i: usize) -> u64 {
        self.entries[i].1
    }

    pub fn entries(&self) -> &[(Vec<String>, u64)] {
        &self.entries
    }

    /// Indices of single-token entries, in vocabulary order.
    pub fn unigram_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.entries[i].0.len() == 1)
            .collect()
    }

    /// Restricts to single-token entries, preserving order and frequencies.
    pub fn unigrams(&self) -> NGramVocabulary {
        Self::from_entries(
            self.entries
                .iter()
                .filter(|(g, _)| g.len() == 1)
                .cloned()
                .collect(),
        )
    }
}

/// Dense row-major matrix with one row per vocabulary entry.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite embedding value".into()));
        }
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::from_row_major(dim, rows.concat())
    }

    pub fn from_dmatrix(m: &nalgebra::DMatrix<f64>) -> Self {
        EmbeddingMatrix {
            dim: m.ncols(),
            data: linalg::to_row_major(m),
        }
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        linalg::from_rows(self.rows(), self.dim, &self.data)
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            dim: self.dim,
            data,
        }
    }
}

/// Unit-normalizes rows, mean-centers each dimension, then unit-normalizes
/// again. Returns the indices of rows that are zero after either
/// normalization step; those rows are left at zero.
pub fn normalize_embeddings(e: &EmbeddingMatrix) -> (EmbeddingMatrix, Vec<usize>) {
    let mut out = e.clone();
    let mut flagged = Vec::new();
    unit_rows(&mut out, &mut flagged);
    let n = out.rows();
    if n > 0 {
        let mut mean = vec![0.0; out.dim];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(out.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for i in 0..n {
            for (v, m) in out.row_mut(i).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
    }
    unit_rows(&mut out, &mut flagged);
    flagged.sort_unstable();
    flagged.dedup();
    if !flagged.is_empty() {
        log::warn!("{} zero rows left unnormalized", flagged.len());
    }
    (out, flagged)
}

fn unit_rows(m: &mut EmbeddingMatrix, flagged: &mut Vec<usize>) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let norm = linalg::norm(row);
        // centering leaves rounding residue on rows that should be zero
        if norm <= 1e-12 {
            row.iter_mut().for_each(|v| *v = 0.0);
            flagged.push(i);
        } else {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

fn escape_token(t: &str) -> String {
    let mut out = String::with_capacity(t.len());
    for c in t.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '_' => out.push_str("\\u"),
            c => out.push(c),
        }
    }
    out
}

fn parse_ngram(field: &str) -> Option<Vec<String>> {
    let mut tokens = vec![String::new()];
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next()? {
                'u' => tokens.last_mut()?.push('_'),
                '\\' => tokens.last_mut()?.push('\\'),
                _ => return None,
            },
            '_' => tokens.push(String::new()),
            c => tokens.last_mut()?.push(c),
        }
    }
    if tokens.iter().any(String::is_empty) {
        return None;
    }
    Some(tokens)
}

/// Writes `count dim` followed by one `ngram v1 ... vd` line per row.
/// N-gram tokens are joined by `_`; literal underscores are written as `\u`
/// and backslashes as `\\`.
pub fn write_embeddings<W: Write>(
    vocab: &NGramVocabulary,
    matrix: &EmbeddingMatrix,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "{} {}", matrix.rows(), matrix.dim())?;
    for i in 0..matrix.rows() {
        let name: Vec<String> = vocab.ngram(i).iter().map(|t| escape_token(t)).collect();
        write!(w, "{}", name.join("_"))?;
        for v in matrix.row(i) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_embeddings<R: BufRead>(r: R) -> Result<(NGramVocabulary, EmbeddingMatrix)> {
    const FMT: &str = "embedding file";
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(FMT, 1, "empty file"))??;
    let mut fields = header.split_whitespace();
    let (Some(count), Some(dim), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(Error::parse(FMT, 1, "expected `count dim` header"));
    };
    let count: usize = count
        .parse()
        .map_err(|_| Error::parse(FMT, 1, "bad row count"))?;
    let dim: usize = dim
        .parse()
        .map_err(|_| Error::parse(FMT, 1, "bad dimension"))?;
    if dim == 0 {
        return Err(Error::parse(FMT, 1, "dimension must be positive"));
    }
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    let mut data = Vec::with_capacity(count.saturating_mul(dim).min(1 << 24));
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let name = fields.next().unwrap_or_default();
        let ngram = parse_ngram(name).ok_or_else(|| Error::parse(FMT, lineno, "bad n-gram"))?;
        let before = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(FMT, lineno, format!("bad value {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(FMT, lineno, "non-finite value"));
            }
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::parse(
                FMT,
                lineno,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
        entries.push((ngram, 0));
    }
    if entries.len() != count {
        return Err(Error::parse(
            FMT,
            1,
            format!("header announces {count} rows, found {}", entries.len()),
        ));
    }
    Ok((
        NGramVocabulary::from_entries(entries),
        EmbeddingMatrix { dim, data },
    ))
}
