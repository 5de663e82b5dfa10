use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Links;
use crate::corpus::Sentence;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignerConfig {
    pub iterations: usize,
    /// Initial diagonal tension λ.
    pub diagonal_tension: f64,
    /// Probability of aligning a target word to the null word.
    pub p_null: f64,
    pub optimize_tension: bool,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        AlignerConfig {
            iterations: 5,
            diagonal_tension: 4.0,
            p_null: 0.08,
            optimize_tension: true,
        }
    }
}

const NULL: u32 = 0;
const MIN_TENSION: f64 = 0.1;
const MAX_TENSION: f64 = 14.0;

/// IBM Model 2 with a log-linear diagonal prior:
/// `p(a_j = i) = (1 - p0) exp(λ h(i, j)) / Z_j` with
/// `h(i, j) = -|(i + 1)/n - (j + 1)/m|`, and `p(a_j = null) = p0`.
/// Target words are generated from source words.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentModel {
    source_ids: HashMap<String, u32>,
    target_ids: HashMap<String, u32>,
    /// `t[e][f]`; row 0 is the null word.
    t: Vec<HashMap<u32, f64>>,
    tension: f64,
    p_null: f64,
    log_likelihoods: Vec<f64>,
}

fn feature(i: usize, j: usize, m: usize, n: usize) -> f64 {
    -((i + 1) as f64 / n as f64 - (j + 1) as f64 / m as f64).abs()
}

/// Unnormalized prior weights of the non-null positions for target
/// position `j`, and their sum.
fn prior_weights(j: usize, m: usize, n: usize, tension: f64, out: &mut Vec<f64>) -> f64 {
    out.clear();
    out.extend((0..n).map(|i| (tension * feature(i, j, m, n)).exp()));
    out.iter().sum()
}

/// Expected feature value under the prior alone, and its variance.
fn prior_moments(j: usize, m: usize, n: usize, tension: f64) -> (f64, f64) {
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let h = feature(i, j, m, n);
        let w = (tension * h).exp();
        z += w;
        s1 += w * h;
        s2 += w * h * h;
    }
    let mean = s1 / z;
    (mean, s2 / z - mean * mean)
}

#[derive(Default)]
struct Accumulator {
    counts: HashMap<(u32, u32), f64>,
    log_likelihood: f64,
    empirical_feature: f64,
    /// Non-null posterior mass per target position, keyed by `(m, n)`.
    position_mass: HashMap<(usize, usize), Vec<f64>>,
}

impl Accumulator {
    fn merge(mut self, other: Accumulator) -> Accumulator {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_default() += v;
        }
        self.log_likelihood += other.log_likelihood;
        self.empirical_feature += other.empirical_feature;
        for (k, v) in other.position_mass {
            let mine = self
                .position_mass
                .entry(k)
                .or_insert_with(|| vec![0.0; v.len()]);
            for (a, b) in mine.iter_mut().zip(v) {
                *a += b;
            }
        }
        self
    }
}

type Encoded = (Vec<u32>, Vec<u32>);

impl AlignmentModel {
    /// `t(f | e)`; `source_word = None` is the null word.
    pub fn prob(&self, target_word: &str, source_word: Option<&str>) -> f64 {
        let Some(&f) = self.target_ids.get(target_word) else {
            return 0.0;
        };
        let e = match source_word {
            None => NULL,
            Some(w) => match self.source_ids.get(w) {
                Some(&e) => e,
                None => return 0.0,
            },
        };
        self.t[e as usize].get(&f).copied().unwrap_or(0.0)
    }

    pub fn tension(&self) -> f64 {
        self.tension
    }

    pub fn p_null(&self) -> f64 {
        self.p_null
    }

    /// Corpus log-likelihood (natural log) at the start of each EM
    /// iteration.
    pub fn log_likelihoods(&self) -> &[f64] {
        &self.log_likelihoods
    }

    /// Rows of `t(· | e)`, null first, for checking normalization.
    pub fn row_sums(&self) -> impl Iterator<Item = f64> + '_ {
        self.t
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| r.values().sum())
    }

    fn t_ids(&self, e: u32, f: u32) -> f64 {
        self.t[e as usize].get(&f).copied().unwrap_or(0.0)
    }

    fn encode(&self, source: &Sentence, target: &Sentence) -> Encoded {
        // unseen words get ids past the vocabulary, with t = 0
        let src = source
            .iter()
            .map(|w| self.source_ids.get(w).copied().unwrap_or(u32::MAX))
            .collect();
        let tgt = target
            .iter()
            .map(|w| self.target_ids.get(w).copied().unwrap_or(u32::MAX))
            .collect();
        (src, tgt)
    }

    /// Viterbi links; target words best explained by the null word stay
    /// unaligned.
    pub fn align(&self, source: &Sentence, target: &Sentence) -> Links {
        const FLOOR: f64 = 1e-12;
        let (src, tgt) = self.encode(source, target);
        let (n, m) = (src.len(), tgt.len());
        let mut links = Links::new();
        if n == 0 || m == 0 {
            return links;
        }
        let t = |e: u32, f: u32| {
            if e as usize >= self.t.len() {
                FLOOR
            } else {
                self.t_ids(e, f).max(FLOOR)
            }
        };
        let mut weights = Vec::with_capacity(n);
        for (j, &f) in tgt.iter().enumerate() {
            let z = prior_weights(j, m, n, self.tension, &mut weights);
            let mut best = (None, self.p_null * t(NULL, f));
            for (i, &e) in src.iter().enumerate() {
                let p = (1.0 - self.p_null) * weights[i] / z * t(e, f);
                if p > best.1 {
                    best = (Some(i), p);
                }
            }
            if let (Some(i), _) = best {
                links.insert((i, j));
            }
        }
        links
    }

    fn e_step(&self, corpus: &[Encoded], uniform: Option<f64>) -> Accumulator {
        // fixed chunks merged in order keep sums reproducible
        let partial: Vec<Accumulator> = corpus
            .par_chunks(64)
            .map(|chunk| {
                chunk
                    .iter()
                    .fold(Accumulator::default(), |mut acc, (src, tgt)| {
                        let (n, m) = (src.len(), tgt.len());
                        let t = |e: u32, f: u32| uniform.unwrap_or_else(|| self.t_ids(e, f));
                        let mut weights = Vec::with_capacity(n);
                        let mut post = vec![0.0; n + 1];
                        let mass = acc
                            .position_mass
                            .entry((m, n))
                            .or_insert_with(|| vec![0.0; m]);
                        let mut mass_delta = vec![0.0; m];
                        for (j, &f) in tgt.iter().enumerate() {
                            let z = prior_weights(j, m, n, self.tension, &mut weights);
                            post[0] = self.p_null * t(NULL, f);
                            for (i, &e) in src.iter().enumerate() {
                                post[i + 1] = (1.0 - self.p_null) * weights[i] / z * t(e, f);
                            }
                            let total: f64 = post.iter().sum();
                            acc.log_likelihood += total.ln();
                            *acc.counts.entry((NULL, f)).or_default() += post[0] / total;
                            for (i, &e) in src.iter().enumerate() {
                                let p = post[i + 1] / total;
                                *acc.counts.entry((e, f)).or_default() += p;
                                acc.empirical_feature += p * feature(i, j, m, n);
                                mass_delta[j] += p;
                            }
                        }
                        for (a, d) in mass.iter_mut().zip(mass_delta) {
                            *a += d;
                        }
                        acc
                    })
            })
            .collect();
        partial
            .into_iter()
            .fold(Accumulator::default(), Accumulator::merge)
    }

    /// Maximizes the expected complete-data log-likelihood in λ. The
    /// objective is concave, so its derivative has at most one root.
    fn optimize_tension(&self, acc: &Accumulator) -> f64 {
        let mut sizes: Vec<(&(usize, usize), &Vec<f64>)> = acc.position_mass.iter().collect();
        sizes.sort_by_key(|p| *p.0);
        let derivative = |lambda: f64| -> (f64, f64) {
            let mut d = acc.empirical_feature;
            let mut dd = 0.0;
            for (&(m, n), mass) in &sizes {
                for (j, &w) in mass.iter().enumerate() {
                    if w > 0.0 {
                        let (mean, var) = prior_moments(j, m, n, lambda);
                        d -= w * mean;
                        dd -= w * var;
                    }
                }
            }
            (d, dd)
        };
        let (mut lo, mut hi) = (MIN_TENSION, MAX_TENSION);
        if derivative(lo).0 <= 0.0 {
            return lo;
        }
        if derivative(hi).0 >= 0.0 {
            return hi;
        }
        let mut x = self.tension.clamp(lo, hi);
        for _ in 0..100 {
            let (d, dd) = derivative(x);
            if d.abs() < 1e-12 {
                break;
            }
            if d > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = if dd < 0.0 { x - d / dd } else { f64::NAN };
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-12 {
                break;
            }
        }
        x
    }
}

fn intern(map: &mut HashMap<String, u32>, w: &str) -> u32 {
    let next = map.len() as u32 + 1;
    *map.entry(w.to_owned()).or_insert(next)
}

/// EM training; pairs with an empty side are skipped.
pub fn train_aligner(
    pairs: &[(Sentence, Sentence)],
    cfg: &AlignerConfig,
) -> Result<AlignmentModel> {
    if !(cfg.p_null > 0.0 && cfg.p_null < 1.0) {
        return Err(Error::InvalidArgument("p_null must lie in (0, 1)".into()));
    }
    if !(cfg.diagonal_tension > 0.0) {
        return Err(Error::InvalidArgument(
            "diagonal tension must be positive".into(),
        ));
    }
    let mut source_ids = HashMap::new();
    let mut target_ids = HashMap::new();
    let corpus: Vec<Encoded> = pairs
        .iter()
        .filter(|(s, t)| !s.is_empty() && !t.is_empty())
        .map(|(s, t)| {
            (
                s.iter().map(|w| intern(&mut source_ids, w)).collect(),
                t.iter().map(|w| intern(&mut target_ids, w)).collect(),
            )
        })
        .collect();
    if corpus.is_empty() {
        return Err(Error::InsufficientData(
            "no non-empty sentence pairs to align".into(),
        ));
    }
    let mut model = AlignmentModel {
        t: vec![HashMap::new(); source_ids.len() + 1],
        source_ids,
        tension: cfg.diagonal_tension,
        p_null: cfg.p_null,
        log_likelihoods: Vec::with_capacity(cfg.iterations),
        target_ids,
    };
    let uniform = 1.0 / model.target_ids.len() as f64;
    for it in 0..cfg.iterations {
        let acc = model.e_step(&corpus, (it == 0).then_some(uniform));
        model.log_likelihoods.push(acc.log_likelihood);
        let mut counts: Vec<((u32, u32), f64)> = acc.counts.iter().map(|(&k, &v)| (k, v)).collect();
        counts.sort_by_key(|p| p.0);
        let mut totals = vec![0.0; model.t.len()];
        for &((e, _), c) in &counts {
            totals[e as usize] += c;
        }
        let mut t = vec![HashMap::new(); model.t.len()];
        for ((e, f), c) in counts {
            t[e as usize].insert(f, c / totals[e as usize]);
        }
        model.t = t;
        if cfg.optimize_tension {
            model.tension = model.optimize_tension(&acc);
        }
        log::debug!(
            "EM iteration {}: log-likelihood {:.6}, tension {:.4}",
            it + 1,
            acc.log_likelihood,
            model.tension
        );
    }
    Ok(model)
}
