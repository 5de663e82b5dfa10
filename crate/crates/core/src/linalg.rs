//! Dense vector and matrix helpers on top of nalgebra.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Mean of the `k` largest values (all values when fewer than `k`).
pub fn top_k_mean(values: impl IntoIterator<Item = f64>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let mut top: Vec<f64> = Vec::with_capacity(k + 1);
    for v in values {
        if top.len() < k {
            top.push(v);
            if top.len() == k {
                top.sort_by(|a, b| b.total_cmp(a));
            }
        } else if v > top[k - 1] {
            let pos = top.partition_point(|x| *x >= v);
            top.insert(pos, v);
            top.pop();
        }
    }
    if top.is_empty() {
        0.0
    } else {
        top.iter().sum::<f64>() / top.len() as f64
    }
}

/// Builds a column-major nalgebra matrix from row-major data.
pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Row-major copy of a nalgebra matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Orthogonal Procrustes: returns `(U, s, V)` with `aᵀb = U diag(s) Vᵀ`.
/// `a U` and `b V` are then maximally aligned; `U Vᵀ` maximizes
/// `trace(Wᵀ aᵀ b)` over orthogonal `W`.
pub fn procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let m = a.transpose() * b;
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vt");
    (
        u,
        svd.singular_values.iter().copied().collect(),
        v_t.transpose(),
    )
}

/// Haar-ish random orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with the sign convention fixed so that `R` has a
/// positive diagonal.
pub fn random_orthogonal<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}
