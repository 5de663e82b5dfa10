use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GleuConfig {
    pub max_n: usize,
    /// Reference-sampling rounds when sentences have several references.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for GleuConfig {
    fn default() -> Self {
        GleuConfig {
            max_n: 4,
            iterations: 500,
            seed: 1,
        }
    }
}

/// Additive GLEU statistics: hypothesis length, reference length, then a
/// (numerator, denominator) pair per n-gram order.
#[derive(Clone, Debug, PartialEq)]
pub struct GleuStats(pub Vec<f64>);

impl GleuStats {
    pub fn zeros(max_n: usize) -> Self {
        GleuStats(vec![0.0; 2 + 2 * max_n])
    }

    pub fn add(&mut self, other: &GleuStats) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn overlap(a: &HashMap<&[String], usize>, b: &HashMap<&[String], usize>) -> usize {
    a.iter().map(|(g, &c)| c.min(b.get(g).copied().unwrap_or(0))).sum()
}

/// Statistics of one hypothesis against one reference. The numerator per
/// order counts clipped matches with the reference minus matches with the
/// source n-grams the reference does not contain, floored at zero.
pub fn gleu_sentence_stats(source: &Sentence, hypothesis: &Sentence, reference: &Sentence, max_n: usize) -> GleuStats {
    let (s, h, r) = (source.tokens(), hypothesis.tokens(), reference.tokens());
    let mut out = Vec::with_capacity(2 + 2 * max_n);
    out.push(h.len() as f64);
    out.push(r.len() as f64);
    for n in 1..=max_n {
        let hn = ngrams(h, n);
        let rn = ngrams(r, n);
        let sn = ngrams(s, n);
        let s_minus_r: HashMap<&[String], usize> = sn
            .iter()
            .filter_map(|(g, &c)| {
                let left = c.saturating_sub(rn.get(g).copied().unwrap_or(0));
                (left > 0).then_some((*g, left))
            })
            .collect();
        let num = overlap(&hn, &rn) as f64 - overlap(&hn, &s_minus_r) as f64;
        out.push(num.max(0.0));
        out.push((h.len() + 1).saturating_sub(n) as f64);
    }
    GleuStats(out)
}

/// GLEU from summed statistics; 0 when any statistic is 0.
pub fn gleu_from_stats(stats: &GleuStats) -> f64 {
    let v = &stats.0;
    if v.iter().any(|&x| x == 0.0) {
        return 0.0;
    }
    let (c, r) = (v[0], v[1]);
    let orders = (v.len() - 2) / 2;
    let log_prec: f64 = v[2..].chunks(2).map(|p| (p[0] / p[1]).ln()).sum::<f64>() / orders as f64;
    ((1.0 - r / c).min(0.0) + log_prec).exp()
}

/// Corpus GLEU over `(source, hypothesis, references)` triples. With
/// several references per sentence, each round draws one reference per
/// sentence and the mean over rounds is returned.
pub fn gleu(corpus: &[(Sentence, Sentence, Vec<Sentence>)], cfg: &GleuConfig) -> Result<f64> {
    if cfg.max_n == 0 {
        return Err(Error::InvalidArgument("GLEU max_n must be >= 1".into()));
    }
    if let Some(i) = corpus.iter().position(|(_, _, refs)| refs.is_empty()) {
        return Err(Error::InvalidArgument(format!("sentence {i} has no reference")));
    }
    let per_ref: Vec<Vec<GleuStats>> = corpus
        .iter()
        .map(|(s, h, refs)| refs.iter().map(|r| gleu_sentence_stats(s, h, r, cfg.max_n)).collect())
        .collect();
    let single = per_ref.iter().all(|r| r.len() == 1);
    let rounds = if single { 1 } else { cfg.iterations.max(1) };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Stratified draws: each sentence walks through fresh random
    // permutations of its references, so every reference is used about
    // equally often.
    let mut orders: Vec<Vec<usize>> = vec![Vec::new(); per_ref.len()];
    let mut sum = 0.0;
    for t in 0..rounds {
        let mut total = GleuStats::zeros(cfg.max_n);
        for (refs, order) in per_ref.iter().zip(orders.iter_mut()) {
            let r = refs.len();
            if t % r == 0 {
                *order = (0..r).collect();
                order.shuffle(&mut rng);
            }
            total.add(&refs[order[t % r]]);
        }
        sum += gleu_from_stats(&total);
    }
    Ok(sum / rounds as f64)
}
