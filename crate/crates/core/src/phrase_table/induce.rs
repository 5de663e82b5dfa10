use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{PhraseTable, PhraseTableEntry};
use crate::embeddings::{knn_cosine, EmbeddingMatrix, NGramVocabulary};
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_NEIGHBOR_LIMIT: usize = 100;
pub const DEFAULT_EPSILON: f64 = 0.001;

const LOG_TAU_BOUNDS: (f64, f64) = (-5.0, 5.0);
const PROBES: usize = 32;
const GOLDEN_TOLERANCE: f64 = 1e-4;

/// Softmax temperature of the phrase translation probabilities.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Temperature(tau))
        } else {
            Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {tau}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `exp(c_i / τ) / Σ_j exp(c_j / τ)`, computed stably.
pub fn softmax(cosines: &[f64], tau: Temperature) -> Vec<f64> {
    let max = cosines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = cosines.iter().map(|c| ((c - max) / tau.0).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_partition(cosines: &[f64], tau: Temperature) -> f64 {
    let max = cosines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max / tau.0
        + cosines
            .iter()
            .map(|c| ((c - max) / tau.0).exp())
            .sum::<f64>()
            .ln()
}

/// Translation probabilities of each candidate given the phrase vector `e`.
pub fn phrase_translation_probs<T: Clone>(
    e: &[f64],
    candidates: &[(T, &[f64])],
    tau: Temperature,
) -> Vec<(T, f64)> {
    let cosines: Vec<f64> = candidates
        .iter()
        .map(|(_, v)| linalg::cosine(e, v))
        .collect();
    candidates
        .iter()
        .zip(softmax(&cosines, tau))
        .map(|((p, _), prob)| (p.clone(), prob))
        .collect()
}

/// `∏_i max(ε, max_j φ(predicted_i | given_j))`.
///
/// `phi(p, g)` returns the word-level probability of `p` given `g`, or
/// `None` when `p` is not among the candidates of `g`.
pub fn lexical_weight(
    given: &[String],
    predicted: &[String],
    phi: impl Fn(&str, &str) -> Option<f64>,
    epsilon: f64,
) -> f64 {
    predicted
        .iter()
        .map(|p| {
            given
                .iter()
                .filter_map(|g| phi(p, g))
                .fold(epsilon, f64::max)
        })
        .product()
}

/// Normalization set of backward probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackwardMode {
    /// Softmax over each target phrase's own nearest source phrases.
    Independent,
    /// Softmax over the source phrases whose forward lists contain the target.
    Renormalize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InductionConfig {
    /// Fixed temperature; estimated from the embeddings when absent.
    pub tau: Option<f64>,
    pub neighbor_limit: usize,
    pub epsilon: f64,
    pub backward: BackwardMode,
    pub temperature_sample: usize,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig {
            tau: None,
            neighbor_limit: DEFAULT_NEIGHBOR_LIMIT,
            epsilon: DEFAULT_EPSILON,
            backward: BackwardMode::Independent,
            temperature_sample: 10_000,
        }
    }
}

/// Per sampled entry: cosine to the retrieved partner and the cosines of
/// the partner's whole candidate set.
struct TemperatureSample {
    target: f64,
    candidates: Vec<f64>,
}

fn temperature_objective(samples: &[TemperatureSample], log_tau: f64) -> f64 {
    let tau = Temperature(log_tau.exp());
    let total: f64 = samples
        .iter()
        .map(|s| (s.target / tau.0 - log_partition(&s.candidates, tau)).exp())
        .sum();
    total / samples.len() as f64
}

/// Estimates τ from mapped embeddings. For each sampled source entry, its
/// nearest target is retrieved, and τ maximizes the mean probability that
/// this target translates back into the entry, with softmax
/// probabilities over the target's `limit` nearest sources.
///
/// The search probes 32 log-spaced points on `ln τ ∈ [−5, 5]` and refines
/// the best bracket by golden-section search.
pub fn estimate_temperature(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    limit: usize,
    sample: usize,
) -> Result<Temperature> {
    if src.rows() == 0 || tgt.rows() == 0 {
        return Err(Error::EmptyVocabulary);
    }
    let n = src.rows();
    let take = n.min(sample.max(1));
    let picked: Vec<usize> = (0..take).map(|i| i * n / take).collect();
    let queries = src.select(&picked);
    let nearest = knn_cosine(&queries, tgt, 1);
    let mut partners: Vec<usize> = nearest.iter().map(|l| l[0].0).collect();
    partners.sort_unstable();
    partners.dedup();
    let back = knn_cosine(&tgt.select(&partners), src, limit.max(1));
    let back: HashMap<usize, &Vec<(usize, f64)>> =
        partners.iter().copied().zip(back.iter()).collect();
    let samples: Vec<TemperatureSample> = picked
        .iter()
        .zip(&nearest)
        .map(|(&e, hit)| {
            let (partner, cos) = hit[0];
            let list = back[&partner];
            let mut candidates: Vec<f64> = list.iter().map(|p| p.1).collect();
            if !list.iter().any(|p| p.0 == e) {
                candidates.push(cos);
            }
            TemperatureSample {
                target: cos,
                candidates,
            }
        })
        .collect();
    Ok(Temperature(
        maximize_log_tau(|lt| temperature_objective(&samples, lt)).exp(),
    ))
}

/// Maximizes `f` over `[−5, 5]`; flat objectives return the upper bound.
fn maximize_log_tau(f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi) = LOG_TAU_BOUNDS;
    let step = (hi - lo) / (PROBES - 1) as f64;
    let probes: Vec<(f64, f64)> = (0..PROBES)
        .map(|i| {
            let x = lo + step * i as f64;
            (x, f(x))
        })
        .collect();
    let (best_i, &(best_x, best_f)) = probes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
        .expect("probes");
    let worst = probes.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if best_f - worst < 1e-12 {
        log::warn!("temperature objective is flat; using the upper bound");
        return hi;
    }
    let mut a = if best_i == 0 {
        lo
    } else {
        probes[best_i - 1].0
    };
    let mut b = if best_i + 1 == PROBES {
        hi
    } else {
        probes[best_i + 1].0
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOLERANCE {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = (a + b) / 2.0;
    // the bracket endpoints can beat its interior when the optimum is a bound
    [(mid, f(mid)), (best_x, best_f), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .expect("candidates")
        .0
}

/// Word-level translation probabilities between unigram entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WordTranslations {
    fwd: HashMap<String, HashMap<String, f64>>,
    bwd: HashMap<String, HashMap<String, f64>>,
}

fn unigram_rows(vocab: &NGramVocabulary, m: &EmbeddingMatrix) -> (Vec<String>, EmbeddingMatrix) {
    let idx = vocab.unigram_indices();
    let words = idx.iter().map(|&i| vocab.ngram(i)[0].clone()).collect();
    (words, m.select(&idx))
}

fn distributions(
    from: &[String],
    from_m: &EmbeddingMatrix,
    to: &[String],
    to_m: &EmbeddingMatrix,
    tau: Temperature,
    limit: usize,
) -> HashMap<String, HashMap<String, f64>> {
    knn_cosine(from_m, to_m, limit)
        .into_iter()
        .enumerate()
        .map(|(i, list)| {
            let cos: Vec<f64> = list.iter().map(|p| p.1).collect();
            let probs = list
                .iter()
                .zip(softmax(&cos, tau))
                .map(|(p, prob)| (to[p.0].clone(), prob))
                .collect();
            (from[i].clone(), probs)
        })
        .collect()
}

impl WordTranslations {
    pub fn induce(
        src_vocab: &NGramVocabulary,
        src: &EmbeddingMatrix,
        tgt_vocab: &NGramVocabulary,
        tgt: &EmbeddingMatrix,
        tau: Temperature,
        limit: usize,
    ) -> Self {
        let (sw, sm) = unigram_rows(src_vocab, src);
        let (tw, tm) = unigram_rows(tgt_vocab, tgt);
        if sw.is_empty() || tw.is_empty() {
            return Self::default();
        }
        WordTranslations {
            fwd: distributions(&sw, &sm, &tw, &tm, tau, limit),
            bwd: distributions(&tw, &tm, &sw, &sm, tau, limit),
        }
    }

    /// `φ(target | source)` at word level.
    pub fn fwd(&self, target: &str, source: &str) -> Option<f64> {
        self.fwd.get(source)?.get(target).copied()
    }

    /// `φ(source | target)` at word level.
    pub fn bwd(&self, source: &str, target: &str) -> Option<f64> {
        self.bwd.get(target)?.get(source).copied()
    }
}

/// Builds the initial phrase table: every source n-gram is paired with its
/// `neighbor_limit` nearest target n-grams by cosine, scored with softmax
/// translation probabilities in both directions and lexical weights over
/// word-level probabilities.
///
/// Returns the table and the temperature used.
pub fn induce_table(
    src_vocab: &NGramVocabulary,
    src: &EmbeddingMatrix,
    tgt_vocab: &NGramVocabulary,
    tgt: &EmbeddingMatrix,
    cfg: &InductionConfig,
) -> Result<(PhraseTable, Temperature)> {
    if src_vocab.is_empty() || tgt_vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if src.rows() != src_vocab.len() || tgt.rows() != tgt_vocab.len() {
        return Err(Error::Mismatch(
            "embedding rows do not match vocabulary".into(),
        ));
    }
    if cfg.neighbor_limit == 0 {
        return Err(Error::InvalidArgument(
            "neighbor limit must be positive".into(),
        ));
    }
    let tau = match cfg.tau {
        Some(t) => Temperature::new(t)?,
        None => estimate_temperature(src, tgt, cfg.neighbor_limit, cfg.temperature_sample)?,
    };
    let eps = cfg.epsilon;
    let fwd = knn_cosine(src, tgt, cfg.neighbor_limit);

    // backward probability lookup per target row
    let backward: Vec<(HashMap<usize, f64>, f64)> = match cfg.backward {
        BackwardMode::Independent => knn_cosine(tgt, src, cfg.neighbor_limit)
            .into_iter()
            .map(|list| {
                let cos: Vec<f64> = list.iter().map(|p| p.1).collect();
                let probs = list.iter().map(|p| p.0).zip(softmax(&cos, tau)).collect();
                (probs, log_partition(&cos, tau))
            })
            .collect(),
        BackwardMode::Renormalize => {
            let mut sets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); tgt.rows()];
            for (s, list) in fwd.iter().enumerate() {
                for &(t, c) in list {
                    sets[t].push((s, c));
                }
            }
            sets.into_iter()
                .map(|set| {
                    let cos: Vec<f64> = set.iter().map(|p| p.1).collect();
                    let probs = set.iter().map(|p| p.0).zip(softmax(&cos, tau)).collect();
                    (
                        probs,
                        if cos.is_empty() {
                            0.0
                        } else {
                            log_partition(&cos, tau)
                        },
                    )
                })
                .collect()
        }
    };

    let words = WordTranslations::induce(src_vocab, src, tgt_vocab, tgt, tau, cfg.neighbor_limit);
    let mut table = PhraseTable::new();
    for (s, list) in fwd.iter().enumerate() {
        let cos: Vec<f64> = list.iter().map(|p| p.1).collect();
        let source = src_vocab.ngram(s);
        for (&(t, c), phi_fwd) in list.iter().zip(softmax(&cos, tau)) {
            let target = tgt_vocab.ngram(t);
            let (probs, log_z) = &backward[t];
            let phi_bwd = match probs.get(&s) {
                Some(&p) => p,
                None => (c / tau.0 - log_z).exp().max(eps),
            };
            table.push(PhraseTableEntry {
                source: source.to_vec(),
                target: target.to_vec(),
                phi_fwd,
                lex_fwd: lexical_weight(source, target, |f, e| words.fwd(f, e), eps),
                phi_bwd,
                lex_bwd: lexical_weight(target, source, |e, f| words.bwd(e, f), eps),
            });
        }
    }
    Ok((table, tau))
}
