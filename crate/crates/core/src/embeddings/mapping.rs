use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize_embeddings, EmbeddingMatrix, NGramVocabulary};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedInit {
    /// Pairs of entries with the same surface n-gram.
    IdenticalTokens,
    /// Matching of sorted intra-lingual similarity distributions.
    FullyUnsupervised,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    pub init: SeedInit,
    /// CSLS neighborhood for dictionary induction; 0 induces by plain cosine.
    pub csls_knn: usize,
    pub threshold: f64,
    /// Iterations without an objective gain above `threshold` before the
    /// keep probability is doubled (or, at 1, before stopping).
    pub patience: usize,
    pub initial_keep_prob: f64,
    pub max_iterations: usize,
    /// Exponent of the singular values in the final symmetric re-weighting.
    pub reweight: f64,
    /// Rows of each side considered during dictionary induction.
    pub induction_vocab: usize,
    /// Rows of each side used by the fully unsupervised initialization.
    pub unsupervised_vocab: usize,
    pub seed: u64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig {
            init: SeedInit::IdenticalTokens,
            csls_knn: 10,
            threshold: 1e-6,
            patience: 50,
            initial_keep_prob: 0.1,
            max_iterations: 1000,
            reweight: 0.5,
            induction_vocab: 20_000,
            unsupervised_vocab: 4_000,
            seed: 1,
        }
    }
}

/// Orthogonal transforms into the shared space plus the singular values used
/// for re-weighting.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossMapping {
    pub source_transform: DMatrix<f64>,
    pub target_transform: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub reweight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub iterations: usize,
    /// Mean dictionary cosine after each Procrustes step, with the keep
    /// probability in force when that step's dictionary was induced.
    pub objective: Vec<(f64, f64)>,
    pub seed_size: usize,
    pub converged: bool,
}

impl CrossMapping {
    fn apply(&self, e: &EmbeddingMatrix, w: &DMatrix<f64>) -> EmbeddingMatrix {
        let mut m = e.to_dmatrix() * w;
        for (j, s) in self.singular_values.iter().enumerate() {
            let scale = s.max(0.0).powf(self.reweight);
            m.column_mut(j).iter_mut().for_each(|v| *v *= scale);
        }
        EmbeddingMatrix::from_dmatrix(&m)
    }

    /// Source embeddings in the shared space, re-weighted.
    pub fn map_source(&self, e: &EmbeddingMatrix) -> EmbeddingMatrix {
        self.apply(e, &self.source_transform)
    }

    /// Target embeddings in the shared space, re-weighted.
    pub fn map_target(&self, e: &EmbeddingMatrix) -> EmbeddingMatrix {
        self.apply(e, &self.target_transform)
    }

    /// Largest `‖WᵀW − I‖_F` over both transforms.
    pub fn orthogonality_error(&self) -> f64 {
        [&self.source_transform, &self.target_transform]
            .iter()
            .map(|w| {
                let d = w.ncols();
                (w.transpose() * *w - DMatrix::<f64>::identity(d, d)).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn identical_seed(src: &NGramVocabulary, tgt: &NGramVocabulary) -> Vec<(usize, usize)> {
    let tgt_index: HashMap<&[String], usize> = (0..tgt.len()).map(|j| (tgt.ngram(j), j)).collect();
    (0..src.len())
        .filter_map(|i| tgt_index.get(src.ngram(i)).map(|&j| (i, j)))
        .collect()
}

fn sorted_similarity(x: &DMatrix<f64>) -> EmbeddingMatrix {
    // (x xᵀ)^½ = U S Uᵀ
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut us = u.clone();
    for (j, s) in svd.singular_values.iter().enumerate() {
        us.column_mut(j).iter_mut().for_each(|v| *v *= s);
    }
    let sim = us * u.transpose();
    let n = sim.nrows();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut r: Vec<f64> = sim.row(i).iter().copied().collect();
        r.sort_by(f64::total_cmp);
        rows.push(r);
    }
    let m = EmbeddingMatrix::from_rows(&rows).expect("square similarity");
    normalize_embeddings(&m).0
}

fn unsupervised_seed(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    cfg: &MappingConfig,
) -> Vec<(usize, usize)> {
    let size = x.nrows().min(z.nrows()).min(cfg.unsupervised_vocab);
    if size == 0 {
        return Vec::new();
    }
    let xs = sorted_similarity(&x.rows(0, size).into_owned()).to_dmatrix();
    let zs = sorted_similarity(&z.rows(0, size).into_owned()).to_dmatrix();
    let sim = &xs * zs.transpose();
    let knn = cfg.csls_knn.max(1);
    let fwd: Vec<f64> = (0..size)
        .map(|i| linalg::top_k_mean(sim.row(i).iter().copied(), knn))
        .collect();
    let bwd: Vec<f64> = (0..size)
        .map(|j| linalg::top_k_mean(sim.column(j).iter().copied(), knn))
        .collect();
    let score = |i: usize, j: usize| sim[(i, j)] - fwd[i] / 2.0 - bwd[j] / 2.0;
    let mut dict = Vec::with_capacity(2 * size);
    for i in 0..size {
        let j = argmax((0..size).map(|j| score(i, j)));
        dict.push((i, j));
    }
    for j in 0..size {
        let i = argmax((0..size).map(|i| score(i, j)));
        dict.push((i, j));
    }
    dict
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn gather(m: &DMatrix<f64>, rows: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let rows: Vec<usize> = rows.collect();
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

const CHUNK: usize = 512;

/// Running top-k (unsorted) per slot, tracking the current minimum.
struct TopK {
    k: usize,
    values: Vec<f64>,
    len: Vec<usize>,
    min: Vec<(usize, f64)>,
}

impl TopK {
    fn new(slots: usize, k: usize) -> Self {
        TopK {
            k,
            values: vec![f64::NEG_INFINITY; slots * k],
            len: vec![0; slots],
            min: vec![(0, f64::NEG_INFINITY); slots],
        }
    }

    #[inline]
    fn push(&mut self, slot: usize, v: f64) {
        if self.len[slot] == self.k && v <= self.min[slot].1 {
            return;
        }
        let vals = &mut self.values[slot * self.k..(slot + 1) * self.k];
        if self.len[slot] < self.k {
            vals[self.len[slot]] = v;
            self.len[slot] += 1;
            if self.len[slot] < self.k {
                return;
            }
        } else {
            vals[self.min[slot].0] = v;
        }
        self.min[slot] =
            vals.iter().enumerate().fold(
                (0, f64::INFINITY),
                |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc },
            );
    }

    fn means(&self) -> Vec<f64> {
        (0..self.len.len())
            .map(|s| {
                let n = self.len[s];
                if n == 0 {
                    0.0
                } else {
                    self.values[s * self.k..s * self.k + n].iter().sum::<f64>() / n as f64
                }
            })
            .collect()
    }
}

/// Similarities between chunks of mapped source rows and all mapped target
/// rows, delivered as contiguous per-source slices.
fn for_each_chunk(xw: &DMatrix<f64>, zw: &DMatrix<f64>, mut f: impl FnMut(usize, &[f64])) {
    let n = xw.nrows();
    let m = zw.nrows();
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let st = zw * xw.rows(start, len).transpose();
        let data = st.as_slice();
        for a in 0..len {
            f(start + a, &data[a * m..(a + 1) * m]);
        }
        start += len;
    }
}

fn induce_dictionary(
    xw: &DMatrix<f64>,
    zw: &DMatrix<f64>,
    knn: usize,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let n = xw.nrows();
    let m = zw.nrows();
    let (src_pen, tgt_pen) = if knn > 0 {
        let mut rows = TopK::new(n, knn);
        let mut cols = TopK::new(m, knn);
        for_each_chunk(xw, zw, |i, sims| {
            for (j, &s) in sims.iter().enumerate() {
                rows.push(i, s);
                cols.push(j, s);
            }
        });
        (rows.means(), cols.means())
    } else {
        (vec![0.0; n], vec![0.0; m])
    };
    let mut fwd = vec![0usize; n];
    let mut bwd = vec![(f64::NEG_INFINITY, 0usize); m];
    let dropout = keep_prob < 1.0;
    for_each_chunk(xw, zw, |i, sims| {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (j, &s) in sims.iter().enumerate() {
            if !dropout || rng.gen_bool(keep_prob) {
                let f = 2.0 * s - tgt_pen[j];
                if f > best.0 {
                    best = (f, j);
                }
            }
            if !dropout || rng.gen_bool(keep_prob) {
                let b = 2.0 * s - src_pen[i];
                if b > bwd[j].0 {
                    bwd[j] = (b, i);
                }
            }
        }
        fwd[i] = best.1;
    });
    let mut dict: Vec<(usize, usize)> = fwd.into_iter().enumerate().collect();
    dict.extend(bwd.into_iter().enumerate().map(|(j, (_, i))| (i, j)));
    dict
}

/// Learns orthogonal maps of both sides into a shared space by
/// self-learning: Procrustes on the current dictionary, then re-induction
/// of the dictionary from mutual nearest neighbors, until the mean
/// dictionary cosine stops improving.
///
/// Both inputs should already be normalized with [`normalize_embeddings`].
pub fn map_embeddings(
    src_vocab: &NGramVocabulary,
    src: &EmbeddingMatrix,
    tgt_vocab: &NGramVocabulary,
    tgt: &EmbeddingMatrix,
    cfg: &MappingConfig,
) -> Result<(CrossMapping, MappingReport)> {
    if src.dim() != tgt.dim() {
        return Err(Error::Mismatch(format!(
            "embedding dimensions differ: {} vs {}",
            src.dim(),
            tgt.dim()
        )));
    }
    if src.rows() != src_vocab.len() || tgt.rows() != tgt_vocab.len() {
        return Err(Error::Mismatch(
            "embedding rows do not match vocabulary".into(),
        ));
    }
    if src.rows() == 0 || tgt.rows() == 0 {
        return Err(Error::EmptyVocabulary);
    }
    let x = src.to_dmatrix();
    let z = tgt.to_dmatrix();
    let mut dict = match cfg.init {
        SeedInit::IdenticalTokens => identical_seed(src_vocab, tgt_vocab),
        SeedInit::FullyUnsupervised => unsupervised_seed(&x, &z, cfg),
    };
    if dict.is_empty() {
        return Err(Error::EmptySeedDictionary);
    }
    let mut report = MappingReport {
        seed_size: dict.len(),
        ..MappingReport::default()
    };
    let n = x.nrows().min(cfg.induction_vocab);
    let m = z.nrows().min(cfg.induction_vocab);
    let x_ind = x.rows(0, n).into_owned();
    let z_ind = z.rows(0, m).into_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut keep_prob = cfg.initial_keep_prob.clamp(f64::MIN_POSITIVE, 1.0);
    let mut best = f64::NEG_INFINITY;
    let mut last_improvement = 0;
    let mut induced_with = 1.0;
    loop {
        let a = gather(&x, dict.iter().map(|p| p.0));
        let b = gather(&z, dict.iter().map(|p| p.1));
        let (u, s, v) = linalg::procrustes(&a, &b);
        let objective = s.iter().sum::<f64>() / dict.len() as f64;
        report.objective.push((objective, induced_with));
        let it = report.iterations;
        report.iterations += 1;
        if objective - best >= cfg.threshold {
            best = objective;
            last_improvement = it;
        } else if it - last_improvement >= cfg.patience {
            if keep_prob >= 1.0 {
                report.converged = true;
            } else {
                keep_prob = (2.0 * keep_prob).min(1.0);
                last_improvement = it;
            }
        }
        if report.converged || report.iterations >= cfg.max_iterations {
            if !report.converged {
                log::warn!(
                    "mapping stopped after {} iterations without converging",
                    report.iterations
                );
            }
            let mapping = CrossMapping {
                source_transform: u,
                target_transform: v,
                singular_values: s,
                reweight: cfg.reweight,
            };
            return Ok((mapping, report));
        }
        let xw = &x_ind * &u;
        let zw = &z_ind * &v;
        dict = induce_dictionary(&xw, &zw, cfg.csls_knn, keep_prob, &mut rng);
        induced_with = keep_prob;
        log::debug!(
            "mapping iteration {}: objective {objective:.6}, keep {keep_prob}",
            report.iterations
        );
    }
}
