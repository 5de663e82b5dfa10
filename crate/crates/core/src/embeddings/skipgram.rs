use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, NGramVocabulary};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 300,
            window: 5,
            negatives: 10,
            epochs: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

/// Skip-gram with negative sampling where every vocabulary n-gram is a
/// center unit and context units are unigrams outside the n-gram span.
#[derive(Clone, Debug)]
pub struct SkipGramModel<'v> {
    vocab: &'v NGramVocabulary,
    cfg: SkipGramConfig,
    input: EmbeddingMatrix,
    output: EmbeddingMatrix,
    context_of: HashMap<&'v str, usize>,
    noise: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    processed: u64,
    total: u64,
}

/// One training example: a center row, a context id, and its negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSample {
    pub center: usize,
    pub context: usize,
    pub negatives: Vec<usize>,
}

/// Input-vector initialization: uniform in `±0.5 / dim`.
pub fn initial_embeddings(rows: usize, cfg: &SkipGramConfig) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = 0.5 / cfg.dim as f64;
    let data = (0..rows * cfg.dim)
        .map(|_| rng.gen_range(-half..half))
        .collect();
    EmbeddingMatrix::from_row_major(cfg.dim, data).expect("finite initialization")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Center occurrences: `(vocabulary row, span start, span length)`.
fn centers(vocab: &NGramVocabulary, tokens: &[String]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for start in 0..tokens.len() {
        for n in 1..=3.min(tokens.len() - start) {
            if let Some(row) = vocab.get(&tokens[start..start + n]) {
                out.push((row, start, n));
            }
        }
    }
    out
}

impl<'v> SkipGramModel<'v> {
    pub fn new(vocab: &'v NGramVocabulary, cfg: SkipGramConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        let unigrams = vocab.unigram_indices();
        if unigrams.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let context_of = unigrams
            .iter()
            .enumerate()
            .map(|(c, &row)| (vocab.ngram(row)[0].as_str(), c))
            .collect();
        let weights: Vec<f64> = unigrams
            .iter()
            .map(|&row| (vocab.frequency(row).max(1) as f64).powf(0.75))
            .collect();
        let noise = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(SkipGramModel {
            vocab,
            input: initial_embeddings(vocab.len(), &cfg),
            output: EmbeddingMatrix::zeros(unigrams.len(), cfg.dim),
            cfg,
            context_of,
            noise,
            rng,
            processed: 0,
            total: 0,
        })
    }

    pub fn input(&self) -> &EmbeddingMatrix {
        &self.input
    }

    pub fn into_input(self) -> EmbeddingMatrix {
        self.input
    }

    fn contexts(&self, tokens: &[String], start: usize, n: usize) -> Vec<usize> {
        let lo = start.saturating_sub(self.cfg.window);
        let hi = (start + n + self.cfg.window).min(tokens.len());
        (lo..hi)
            .filter(|&j| j < start || j >= start + n)
            .filter_map(|j| self.context_of.get(tokens[j].as_str()).copied())
            .collect()
    }

    /// Runs one pass over `corpus`. The learning rate decays linearly from
    /// its initial value over all `epochs` passes.
    pub fn train_epoch(&mut self, corpus: &[Sentence]) {
        if self.total == 0 {
            let per_epoch: u64 = corpus
                .iter()
                .map(|s| centers(self.vocab, s.tokens()).len() as u64)
                .sum();
            self.total = (per_epoch * self.cfg.epochs.max(1) as u64).max(1);
        }
        let dim = self.cfg.dim;
        let mut grad = vec![0.0; dim];
        for sentence in corpus {
            let tokens = sentence.tokens();
            for (center, start, n) in centers(self.vocab, tokens) {
                let progress = self.processed as f64 / self.total as f64;
                let lr = self.cfg.learning_rate * (1.0 - progress).max(1e-4);
                self.processed += 1;
                for ctx in self.contexts(tokens, start, n) {
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=self.cfg.negatives {
                        let (target, label) = if k == 0 {
                            (ctx, 1.0)
                        } else {
                            let t = self.noise.sample(&mut self.rng);
                            if t == ctx {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let v = self.input.row(center);
                        let u = self.output.row_mut(target);
                        let g = (label - sigmoid(linalg::dot(v, u))) * lr;
                        for ((acc, x), y) in grad.iter_mut().zip(u.iter_mut()).zip(v) {
                            *acc += g * *x;
                            *x += g * y;
                        }
                    }
                    for (x, g) in self.input.row_mut(center).iter_mut().zip(&grad) {
                        *x += g;
                    }
                }
            }
        }
    }

    /// Negative-sampling loss summed over a fixed set of examples.
    pub fn loss(&self, batch: &[LossSample]) -> f64 {
        batch
            .iter()
            .map(|s| {
                let v = self.input.row(s.center);
                let pos = -log_sigmoid(linalg::dot(v, self.output.row(s.context)));
                let neg: f64 = s
                    .negatives
                    .iter()
                    .map(|&t| -log_sigmoid(-linalg::dot(v, self.output.row(t))))
                    .sum();
                pos + neg
            })
            .sum()
    }
}

/// Draws a reproducible batch of training examples for loss monitoring.
pub fn sample_loss_batch(
    model: &SkipGramModel<'_>,
    corpus: &[Sentence],
    size: usize,
    seed: u64,
) -> Vec<LossSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::new();
    for s in corpus {
        for (center, start, n) in centers(model.vocab, s.tokens()) {
            for ctx in model.contexts(s.tokens(), start, n) {
                pool.push((center, ctx));
            }
        }
    }
    if pool.is_empty() {
        return Vec::new();
    }
    (0..size)
        .map(|_| {
            let (center, context) = pool[rng.gen_range(0..pool.len())];
            let negatives = (0..model.cfg.negatives)
                .map(|_| model.noise.sample(&mut rng))
                .filter(|&t| t != context)
                .collect();
            LossSample {
                center,
                context,
                negatives,
            }
        })
        .collect()
}

/// Trains center-unit embeddings for every vocabulary row. Rows whose
/// n-gram never occurs in `corpus` keep their initialization.
pub fn train_ngram_embeddings(
    corpus: &[Sentence],
    vocab: &NGramVocabulary,
    cfg: &SkipGramConfig,
) -> Result<EmbeddingMatrix> {
    let mut model = SkipGramModel::new(vocab, cfg.clone())?;
    let mut seen = vec![false; vocab.len()];
    for s in corpus {
        for (row, _, _) in centers(vocab, s.tokens()) {
            seen[row] = true;
        }
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        log::warn!("{missing} vocabulary n-grams never occur in the training corpus");
    }
    for epoch in 0..cfg.epochs {
        model.train_epoch(corpus);
        log::debug!("skip-gram epoch {} done", epoch + 1);
    }
    Ok(model.into_input())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::NGramCutoffs;

    fn toy_corpus() -> Vec<Sentence> {
        let mut out = Vec::new();
        for i in 0..200 {
            out.push(Sentence::from_line(if i % 2 == 0 { "x y" } else { "z w" }));
        }
        out
    }

    fn small_cfg(epochs: usize) -> SkipGramConfig {
        SkipGramConfig {
            dim: 16,
            window: 2,
            negatives: 3,
            epochs,
            learning_rate: 0.05,
            seed: 9,
        }
    }

    #[test]
    fn default_dimension_is_300() {
        let cfg = SkipGramConfig::default();
        assert_eq!(
            (cfg.dim, cfg.window, cfg.negatives, cfg.epochs),
            (300, 5, 10, 5)
        );
        let corpus = [Sentence::from_line("a b")];
        let vocab = NGramVocabulary::build(&corpus, NGramCutoffs::default());
        let m =
            train_ngram_embeddings(&corpus, &vocab, &SkipGramConfig { epochs: 1, ..cfg }).unwrap();
        assert_eq!(m.dim(), 300);
        assert_eq!(m.rows(), vocab.len());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = toy_corpus();
        let vocab = NGramVocabulary::build(&corpus, NGramCutoffs::default());
        let cfg = small_cfg(0);
        let m = train_ngram_embeddings(&corpus, &vocab, &cfg).unwrap();
        assert_eq!(m, initial_embeddings(vocab.len(), &cfg));
    }

    #[test]
    fn cooccurring_tokens_end_up_closer() {
        let corpus: Vec<Sentence> = (0..200)
            .map(|i| Sentence::from_line(if i % 2 == 0 { "a x y b" } else { "c z d" }))
            .collect();
        let vocab = NGramVocabulary::build(&corpus, NGramCutoffs::default());
        let m = train_ngram_embeddings(&corpus, &vocab, &small_cfg(20)).unwrap();
        let row = |w: &str| m.row(vocab.get(&[w.to_owned()]).unwrap());
        assert!(linalg::cosine(row("x"), row("y")) > linalg::cosine(row("x"), row("z")));
    }

    #[test]
    fn loss_decreases_over_first_epochs() {
        let corpus = toy_corpus();
        let vocab = NGramVocabulary::build(&corpus, NGramCutoffs::default());
        let mut model = SkipGramModel::new(&vocab, small_cfg(3)).unwrap();
        let batch = sample_loss_batch(&model, &corpus, 64, 4);
        let mut last = model.loss(&batch);
        for _ in 0..3 {
            model.train_epoch(&corpus);
            let now = model.loss(&batch);
            assert!(now < last, "{now} >= {last}");
            last = now;
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let corpus = toy_corpus();
        let vocab = NGramVocabulary::build(&corpus, NGramCutoffs::default());
        let a = train_ngram_embeddings(&corpus, &vocab, &small_cfg(2)).unwrap();
        let b = train_ngram_embeddings(&corpus, &vocab, &small_cfg(2)).unwrap();
        assert_eq!(a, b);
    }
}
