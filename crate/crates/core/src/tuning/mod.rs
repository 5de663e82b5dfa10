//! Minimum error rate training over accumulated n-best lists.

mod envelope;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::envelope::{line_search, upper_envelope};

use crate::corpus::Sentence;
use crate::decoder::{Decoder, Weights};
use crate::error::{Error, Result};
use crate::metrics::{gleu_from_stats, gleu_sentence_stats, sentence_m2_counts, Counts, M2Sentence, MaxMatchConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    M2F05,
    Gleu,
}

impl Objective {
    /// Corpus score from summed sufficient statistics.
    pub fn score(&self, stats: &SufficientStats) -> f64 {
        match self {
            Objective::M2F05 => Counts {
                tp: stats.0[0] as u64,
                fp: stats.0[1] as u64,
                fn_: stats.0[2] as u64,
            }
            .f05(),
            Objective::Gleu => gleu_from_stats(&crate::metrics::GleuStats(stats.0.clone())),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m2" | "m2_f05" => Ok(Objective::M2F05),
            "gleu" => Ok(Objective::Gleu),
            _ => Err(Error::InvalidArgument(format!("unknown objective {s:?}"))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::M2F05 => "m2_f05",
            Objective::Gleu => "gleu",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub objective: Objective,
    pub n_best: usize,
    pub outer_iterations: usize,
    pub random_restarts: usize,
    /// Stop when no weight moves by more than this (after L1 normalization).
    pub tolerance: f64,
    pub seed: u64,
    pub max_match: MaxMatchConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            objective: Objective::M2F05,
            n_best: 100,
            outer_iterations: 10,
            random_restarts: 20,
            tolerance: 1e-4,
            seed: 1,
            max_match: MaxMatchConfig::default(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_best == 0 || self.outer_iterations == 0 {
            return Err(Error::Config("n_best and outer_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Additive per-sentence metric statistics. M²: `[tp, fp, fn]`; GLEU: the
/// layout of [`crate::metrics::GleuStats`].
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats(pub Vec<f64>);

impl SufficientStats {
    pub fn zeros(len: usize) -> Self {
        SufficientStats(vec![0.0; len])
    }

    pub fn add(&mut self, o: &SufficientStats) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            *a += b;
        }
    }

    pub fn sub(&mut self, o: &SufficientStats) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            *a -= b;
        }
    }
}

/// Gold data for a tuning set.
#[derive(Clone, Debug)]
pub enum References {
    M2(Vec<M2Sentence>),
    Gleu {
        sources: Vec<Sentence>,
        references: Vec<Vec<Sentence>>,
    },
}

/// Decoder inputs plus the references used to score their outputs.
#[derive(Clone, Debug)]
pub struct TuningSet {
    pub inputs: Vec<Sentence>,
    pub references: References,
}

impl TuningSet {
    /// Inputs are the M² source sentences themselves.
    pub fn from_m2(gold: Vec<M2Sentence>) -> Self {
        TuningSet {
            inputs: gold.iter().map(|s| s.source.clone()).collect(),
            references: References::M2(gold),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// The set for the opposite direction: corrections become inputs and
    /// the original sentences their references.
    pub fn reversed(&self) -> TuningSet {
        match &self.references {
            References::M2(gold) => TuningSet::from_m2(gold.iter().map(M2Sentence::reversed).collect()),
            References::Gleu { sources, references } => {
                let first: Vec<Sentence> = references
                    .iter()
                    .map(|r| r.first().cloned().unwrap_or_default())
                    .collect();
                TuningSet {
                    inputs: first.clone(),
                    references: References::Gleu {
                        sources: first,
                        references: sources.iter().map(|s| vec![s.clone()]).collect(),
                    },
                }
            }
        }
    }

    fn validate(&self, objective: Objective) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::InsufficientData("tuning set is empty".into()));
        }
        let n = match &self.references {
            References::M2(g) => g.len(),
            References::Gleu { sources, references } => {
                if sources.len() != references.len() {
                    return Err(Error::Mismatch("GLEU sources and references differ in length".into()));
                }
                if references.iter().any(Vec::is_empty) {
                    return Err(Error::InvalidArgument("every sentence needs a reference".into()));
                }
                if objective == Objective::M2F05 {
                    return Err(Error::Config("the M² objective needs M² annotations".into()));
                }
                sources.len()
            }
        };
        if n != self.inputs.len() {
            return Err(Error::Mismatch(format!("{} inputs but {n} references", self.inputs.len())));
        }
        Ok(())
    }

    /// Statistics of `hyp` as the output for sentence `i`. GLEU statistics
    /// are summed over all references of the sentence.
    fn stats(&self, i: usize, hyp: &Sentence, objective: Objective, mm: &MaxMatchConfig) -> SufficientStats {
        match (objective, &self.references) {
            (Objective::M2F05, References::M2(gold)) => {
                let c = sentence_m2_counts(&gold[i], hyp, mm);
                SufficientStats(vec![c.tp as f64, c.fp as f64, c.fn_ as f64])
            }
            (Objective::Gleu, References::M2(gold)) => {
                let s = &gold[i];
                let mut out = SufficientStats::zeros(10);
                for id in s.annotator_ids() {
                    let edits = s.gold(id);
                    let r = Sentence::new(crate::metrics::apply_edits(s.source.tokens(), &edits))
                        .expect("edits keep tokens whitespace-free");
                    out.add(&SufficientStats(gleu_sentence_stats(&s.source, hyp, &r, 4).0));
                }
                out
            }
            (Objective::Gleu, References::Gleu { sources, references }) => {
                let mut out = SufficientStats::zeros(10);
                for r in &references[i] {
                    out.add(&SufficientStats(gleu_sentence_stats(&sources[i], hyp, r, 4).0));
                }
                out
            }
            (Objective::M2F05, References::Gleu { .. }) => unreachable!("rejected by validate"),
        }
    }
}

/// One pooled hypothesis: its feature values and metric statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub features: Vec<f64>,
    pub stats: SufficientStats,
}

/// Per-sentence hypothesis pools, accumulated across decoding rounds.
#[derive(Clone, Debug, Default)]
pub struct Pool {
    pub sentences: Vec<Vec<Hypothesis>>,
    seen: Vec<HashSet<Sentence>>,
}

impl Pool {
    pub fn new(sentences: usize) -> Self {
        Pool {
            sentences: vec![Vec::new(); sentences],
            seen: vec![HashSet::new(); sentences],
        }
    }

    pub fn from_hypotheses(sentences: Vec<Vec<Hypothesis>>) -> Self {
        let seen = vec![HashSet::new(); sentences.len()];
        Pool { sentences, seen }
    }

    /// Adds `hyp` unless sentence `i` already holds the same surface.
    pub fn insert(&mut self, i: usize, surface: &Sentence, hyp: Hypothesis) -> bool {
        if self.seen[i].insert(surface.clone()) {
            self.sentences[i].push(hyp);
            true
        } else {
            false
        }
    }

    pub fn total(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

/// Index of the highest-scoring hypothesis; ties go to the lowest index.
pub fn argmax(hyps: &[Hypothesis], weights: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, h) in hyps.iter().enumerate() {
        let s: f64 = h.features.iter().zip(weights).map(|(f, w)| f * w).sum();
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k)
}

/// Corpus objective of the pool's 1-best selections under `weights`.
pub fn pool_objective(pool: &[Vec<Hypothesis>], weights: &[f64], objective: Objective) -> f64 {
    let mut total: Option<SufficientStats> = None;
    for hyps in pool {
        if let Some(k) = argmax(hyps, weights) {
            match &mut total {
                Some(t) => t.add(&hyps[k].stats),
                None => total = Some(hyps[k].stats.clone()),
            }
        }
    }
    total.map_or(0.0, |t| objective.score(&t))
}

fn normalize(w: &mut [f64]) {
    let l1: f64 = w.iter().map(|x| x.abs()).sum();
    if l1 > 0.0 {
        w.iter_mut().for_each(|x| *x /= l1);
    }
}

/// Coordinate ascent with exact line searches from `start` and from
/// `restarts` random points. Returns the best weights and their pool
/// objective; `start` wins ties.
pub fn optimize(
    pool: &[Vec<Hypothesis>],
    start: &[f64],
    objective: Objective,
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut starts = vec![start.to_vec()];
    for _ in 0..restarts {
        starts.push((0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect());
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mut w in starts {
        let mut score = pool_objective(pool, &w, objective);
        for _pass in 0..dim.max(1) * 4 {
            let mut improved = false;
            for d in 0..dim {
                let mut dir = vec![0.0; dim];
                dir[d] = 1.0;
                let (step, value) = line_search(pool, &w, &dir, objective);
                if value > score && step != 0.0 {
                    // re-scored from scratch so rounding cannot fake a gain
                    let mut moved = w.clone();
                    moved[d] += step;
                    let actual = pool_objective(pool, &moved, objective);
                    if actual > score {
                        w = moved;
                        score = actual;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().map_or(true, |(_, b)| score > *b) {
            best = Some((w, score));
        }
    }
    let (mut w, _) = best.expect("at least the start point");
    normalize(&mut w);
    let score = pool_objective(pool, &w, objective);
    (w, score)
}

/// Objective before and after one inner optimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerStep {
    pub before: f64,
    pub after: f64,
    pub pool_size: usize,
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub weights: Weights,
    /// Objective on the final pool.
    pub objective: f64,
    pub history: Vec<InnerStep>,
}

/// Runs MERT: decode n-best lists, pool them, re-optimize the weights, and
/// repeat until the weights settle, the pool stops growing, or the
/// iteration limit is reached.
pub fn tune(decoder: &Decoder<'_>, data: &TuningSet, init: &Weights, cfg: &TuningConfig) -> Result<TuneOutcome> {
    cfg.validate()?;
    data.validate(cfg.objective)?;
    let layout = decoder.layout();
    let mut weights = init.aligned_to(layout)?.values;
    let mut pool = Pool::new(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();
    for iter in 0..cfg.outer_iterations {
        let w = Weights {
            names: layout.names().to_vec(),
            values: weights.clone(),
        };
        let lists = decoder.nbest_corpus(&w, &data.inputs, cfg.n_best)?;
        let scored: Vec<Vec<(Sentence, Hypothesis)>> = lists
            .into_par_iter()
            .enumerate()
            .map(|(i, list)| {
                list.into_iter()
                    .map(|t| {
                        let stats = data.stats(i, &t.tokens, cfg.objective, &cfg.max_match);
                        let h = Hypothesis {
                            features: t.features.0,
                            stats,
                        };
                        (t.tokens, h)
                    })
                    .collect()
            })
            .collect();
        let mut added = 0;
        for (i, list) in scored.into_iter().enumerate() {
            for (surface, h) in list {
                added += usize::from(pool.insert(i, &surface, h));
            }
        }
        let before = pool_objective(&pool.sentences, &weights, cfg.objective);
        if added == 0 && iter > 0 {
            info!("tuning: n-best lists added nothing new; stopping");
            break;
        }
        let (next, after) = optimize(&pool.sentences, &weights, cfg.objective, cfg.random_restarts, &mut rng);
        info!(
            "tuning iteration {}: pool {} (+{added}), {} {before:.4} -> {after:.4}",
            iter + 1,
            pool.total(),
            cfg.objective
        );
        history.push(InnerStep {
            before,
            after,
            pool_size: pool.total(),
        });
        let mut prev = weights.clone();
        normalize(&mut prev);
        let change = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        debug!("tuning: max weight change {change:.3e}");
        weights = next;
        if change < cfg.tolerance {
            break;
        }
    }
    let objective = pool_objective(&pool.sentences, &weights, cfg.objective);
    Ok(TuneOutcome {
        weights: Weights {
            names: layout.names().to_vec(),
            values: weights,
        },
        objective,
        history,
    })
}
