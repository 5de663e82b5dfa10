use rayon::prelude::*;

use super::EmbeddingMatrix;
use crate::linalg;

/// Keeps the `k` best `(index, score)` pairs, descending by score with ties
/// broken by ascending index.
pub(crate) fn top_k(scores: impl IntoIterator<Item = (usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let better = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for item in scores {
        if out.len() == k && better(&item, &out[k - 1]).is_ge() {
            continue;
        }
        let pos = out.partition_point(|x| better(x, &item).is_lt());
        out.insert(pos, item);
        out.truncate(k);
    }
    out
}

/// Plain cosine retrieval of the `k` closest candidate rows.
pub fn cosine_neighbors(
    query: &[f64],
    candidates: &EmbeddingMatrix,
    k: usize,
) -> Vec<(usize, f64)> {
    top_k(
        (0..candidates.rows()).map(|j| (j, linalg::cosine(query, candidates.row(j)))),
        k,
    )
}

fn unit_rows(m: &EmbeddingMatrix) -> nalgebra::DMatrix<f64> {
    let mut d = m.to_dmatrix();
    for mut row in d.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    d
}

/// Cosine `k`-nearest candidates of every query row, computed with blocked
/// matrix products. Each list is ordered as in [`cosine_neighbors`].
pub fn knn_cosine(
    queries: &EmbeddingMatrix,
    candidates: &EmbeddingMatrix,
    k: usize,
) -> Vec<Vec<(usize, f64)>> {
    const BLOCK: usize = 256;
    let q = unit_rows(queries);
    let c = unit_rows(candidates);
    let m = c.nrows();
    let mut out = Vec::with_capacity(q.nrows());
    let mut start = 0;
    while start < q.nrows() {
        let len = BLOCK.min(q.nrows() - start);
        let sims = &c * q.rows(start, len).transpose();
        let data = sims.as_slice();
        let block: Vec<Vec<(usize, f64)>> = (0..len)
            .into_par_iter()
            .map(|a| top_k(data[a * m..(a + 1) * m].iter().copied().enumerate(), k))
            .collect();
        out.extend(block);
        start += len;
    }
    out
}

/// Precomputed CSLS penalties between a query set and a candidate set.
///
/// `csls(q, c) = 2 cos(q, c) - r_c - r_q`, where `r_c` is the mean cosine of
/// `c` to its `knn` nearest queries and `r_q` the mean cosine of `q` to its
/// `knn` nearest candidates.
#[derive(Clone, Debug)]
pub struct NeighborIndex<'a> {
    queries: &'a EmbeddingMatrix,
    candidates: &'a EmbeddingMatrix,
    query_penalty: Vec<f64>,
    candidate_penalty: Vec<f64>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(queries: &'a EmbeddingMatrix, candidates: &'a EmbeddingMatrix, knn: usize) -> Self {
        let query_penalty = (0..queries.rows())
            .into_par_iter()
            .map(|i| {
                let q = queries.row(i);
                linalg::top_k_mean(
                    (0..candidates.rows()).map(|j| linalg::cosine(q, candidates.row(j))),
                    knn,
                )
            })
            .collect();
        let candidate_penalty = (0..candidates.rows())
            .into_par_iter()
            .map(|j| {
                let c = candidates.row(j);
                linalg::top_k_mean(
                    (0..queries.rows()).map(|i| linalg::cosine(c, queries.row(i))),
                    knn,
                )
            })
            .collect();
        NeighborIndex {
            queries,
            candidates,
            query_penalty,
            candidate_penalty,
        }
    }

    pub fn score(&self, query: usize, candidate: usize) -> f64 {
        2.0 * linalg::cosine(self.queries.row(query), self.candidates.row(candidate))
            - self.candidate_penalty[candidate]
            - self.query_penalty[query]
    }

    pub fn neighbors(&self, query: usize, k: usize) -> Vec<(usize, f64)> {
        top_k(
            (0..self.candidates.rows()).map(|j| (j, self.score(query, j))),
            k,
        )
    }
}

/// CSLS retrieval for row `query` of `queries` against `candidates`.
pub fn csls_neighbors(
    query: usize,
    queries: &EmbeddingMatrix,
    candidates: &EmbeddingMatrix,
    k: usize,
    knn: usize,
) -> Vec<(usize, f64)> {
    NeighborIndex::new(queries, candidates, knn).neighbors(query, k)
}
