use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::edit::{char_edit_ops, edit_ops};
use super::features::{FeatureLayout, FeatureVector, Weights, LOG_LEX_BWD, LOG_LEX_FWD, LOG_PHI_BWD, LOG_PHI_FWD};
use crate::corpus::{debpe, Sentence};
use crate::error::Result;
use crate::lm::{LmState, NGramLanguageModel, WordClassMap};
use crate::phrase_table::PhraseTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    /// Hypotheses kept per stack; 0 keeps all.
    pub beam: usize,
    /// Phrase-penalty contribution of a pass-through token.
    pub pass_through_penalty: f64,
    /// Translation options kept per source phrase, best `phi_fwd` first;
    /// 0 keeps all.
    pub options_per_phrase: usize,
    /// Longest source phrase looked up; 0 uses the table's longest.
    pub max_phrase_len: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            beam: 100,
            pass_through_penalty: 1.0,
            options_per_phrase: 20,
            max_phrase_len: 0,
        }
    }
}

/// A complete output with its feature vector and model score.
#[derive(Clone, Debug, PartialEq)]
pub struct Translation {
    pub tokens: Sentence,
    pub features: FeatureVector,
    pub score: f64,
}

#[derive(Clone, Copy)]
pub struct ClassLm<'a> {
    pub lm: &'a NGramLanguageModel,
    pub classes: &'a WordClassMap,
}

/// Monotone phrase-based decoder over a phrase table and language models.
pub struct Decoder<'a> {
    table: &'a PhraseTable,
    lms: Vec<&'a NGramLanguageModel>,
    class_lm: Option<ClassLm<'a>>,
    layout: FeatureLayout,
    cfg: DecoderConfig,
}

struct PhraseOption {
    start: usize,
    len: usize,
    target: Vec<String>,
    features: FeatureVector,
    lm_ids: Vec<Vec<u32>>,
    class_ids: Vec<u32>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct StateKey {
    lm: Vec<LmState>,
    class: Option<LmState>,
}

struct Arc {
    /// `None` for arcs leaving the empty hypothesis.
    prev: Option<usize>,
    /// Index into the option list; `None` for the end-of-sentence arc.
    option: Option<usize>,
    delta: FeatureVector,
    delta_score: f64,
}

struct Node {
    state: StateKey,
    best: f64,
    arcs: Vec<Arc>,
}

/// Best-first enumeration entry: a path suffix ending at the goal.
struct Partial {
    priority: f64,
    seq: usize,
    node: Option<usize>,
    path: usize,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Partial {}
impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(other.seq.cmp(&self.seq))
    }
}

const LN_10: f64 = std::f64::consts::LN_10;

impl<'a> Decoder<'a> {
    pub fn new(
        table: &'a PhraseTable,
        lms: Vec<&'a NGramLanguageModel>,
        class_lm: Option<ClassLm<'a>>,
        cfg: DecoderConfig,
    ) -> Self {
        let layout = FeatureLayout::new(lms.len(), class_lm.is_some());
        Decoder {
            table,
            lms,
            class_lm,
            layout,
            cfg,
        }
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    fn static_features(&self, source: &[String], target: &[String], phrase_penalty: f64, scores: [f64; 4]) -> FeatureVector {
        let l = &self.layout;
        let mut f = l.zeros();
        f.0[LOG_PHI_FWD] = scores[0].ln();
        f.0[LOG_LEX_FWD] = scores[1].ln();
        f.0[LOG_PHI_BWD] = scores[2].ln();
        f.0[LOG_LEX_BWD] = scores[3].ln();
        f.0[l.word_penalty()] = target.len() as f64;
        f.0[l.phrase_penalty()] = phrase_penalty;
        let w = edit_ops(source, target);
        f.0[l.levenshtein_word()] = w.distance as f64;
        f.0[l.word_ops()] = w.insertions as f64;
        f.0[l.word_ops() + 1] = w.deletions as f64;
        f.0[l.word_ops() + 2] = w.substitutions as f64;
        let c = char_edit_ops(source, target);
        f.0[l.char_ops()] = c.insertions as f64;
        f.0[l.char_ops() + 1] = c.deletions as f64;
        f.0[l.char_ops() + 2] = c.substitutions as f64;
        f
    }

    fn make_option(&self, start: usize, source: &[String], target: Vec<String>, features: FeatureVector) -> PhraseOption {
        PhraseOption {
            start,
            len: source.len(),
            lm_ids: self
                .lms
                .iter()
                .map(|lm| target.iter().map(|t| lm.id(t)).collect())
                .collect(),
            class_ids: self
                .class_lm
                .map(|c| {
                    c.classes
                        .map_tokens(&target)
                        .iter()
                        .map(|t| c.lm.id(t))
                        .collect()
                })
                .unwrap_or_default(),
            target,
            features,
        }
    }

    /// Options grouped by start position.
    fn collect_options(&self, source: &Sentence) -> Vec<Vec<PhraseOption>> {
        let tokens = source.tokens();
        let n = tokens.len();
        let max_len = match self.cfg.max_phrase_len {
            0 => self.table.max_source_len().max(1),
            k => k,
        };
        let mut by_start: Vec<Vec<PhraseOption>> = (0..n).map(|_| Vec::new()).collect();
        for (start, slot) in by_start.iter_mut().enumerate() {
            for len in 1..=max_len.min(n - start) {
                let span = &tokens[start..start + len];
                let mut entries: Vec<_> = self.table.options(span).collect();
                entries.sort_by(|a, b| b.phi_fwd.total_cmp(&a.phi_fwd));
                if self.cfg.options_per_phrase > 0 {
                    entries.truncate(self.cfg.options_per_phrase);
                }
                for e in entries {
                    let f = self.static_features(span, &e.target, 1.0, e.scores());
                    slot.push(self.make_option(start, span, e.target.clone(), f));
                }
            }
            if !slot.iter().any(|o| o.len == 1) {
                let span = &tokens[start..start + 1];
                let f = self.static_features(span, span, self.cfg.pass_through_penalty, [1.0; 4]);
                slot.push(self.make_option(start, span, span.to_vec(), f));
            }
        }
        by_start
    }

    fn begin_state(&self) -> StateKey {
        StateKey {
            lm: self.lms.iter().map(|lm| lm.begin_state()).collect(),
            class: self.class_lm.map(|c| c.lm.begin_state()),
        }
    }

    /// LM feature deltas for appending `option` in `state`.
    fn extend(&self, state: &StateKey, option: &PhraseOption, features: &mut FeatureVector) -> StateKey {
        let mut lm_states = Vec::with_capacity(self.lms.len());
        for (k, lm) in self.lms.iter().enumerate() {
            let mut s = state.lm[k].clone();
            let mut total = 0.0;
            for &id in &option.lm_ids[k] {
                let (p, next) = lm.score_id(&s, id);
                total += p;
                s = next;
            }
            features.0[self.layout.lm(k)] += total * LN_10;
            lm_states.push(s);
        }
        let class = match (self.class_lm, &state.class) {
            (Some(c), Some(cs)) => {
                let mut s = cs.clone();
                let mut total = 0.0;
                for &id in &option.class_ids {
                    let (p, next) = c.lm.score_id(&s, id);
                    total += p;
                    s = next;
                }
                features.0[self.layout.class_lm().expect("class LM layout")] += total * LN_10;
                Some(s)
            }
            _ => None,
        };
        StateKey { lm: lm_states, class }
    }

    fn end_features(&self, state: &StateKey) -> FeatureVector {
        let mut f = self.layout.zeros();
        for (k, lm) in self.lms.iter().enumerate() {
            f.0[self.layout.lm(k)] = lm.score_end(&state.lm[k]) * LN_10;
        }
        if let (Some(c), Some(cs)) = (self.class_lm, &state.class) {
            f.0[self.layout.class_lm().expect("class LM layout")] = c.lm.score_end(cs) * LN_10;
        }
        f
    }

    /// Builds the pruned search lattice; returns nodes, options, and the
    /// goal's incoming arcs.
    fn search(&self, weights: &[f64], source: &Sentence) -> (Vec<Node>, Vec<PhraseOption>, Vec<Arc>) {
        let n = source.len();
        let options: Vec<PhraseOption> = self.collect_options(source).into_iter().flatten().collect();
        let mut from: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, o) in options.iter().enumerate() {
            from[o.start].push(i);
        }
        let mut nodes: Vec<Node> = Vec::new();
        let mut stacks: Vec<HashMap<StateKey, usize>> = (0..=n).map(|_| HashMap::new()).collect();
        let root_state = self.begin_state();
        let mut goal_arcs = Vec::new();
        // stack 0 holds only the empty hypothesis, represented by `None`
        let mut frontier: Vec<(Option<usize>, StateKey, f64)> = vec![(None, root_state, 0.0)];
        for covered in 0..=n {
            if covered > 0 {
                let mut ids: Vec<usize> = stacks[covered].values().copied().collect();
                ids.sort_by(|&a, &b| nodes[b].best.total_cmp(&nodes[a].best).then(a.cmp(&b)));
                if self.cfg.beam > 0 {
                    ids.truncate(self.cfg.beam);
                }
                frontier = ids
                    .into_iter()
                    .map(|i| (Some(i), nodes[i].state.clone(), nodes[i].best))
                    .collect();
            }
            if covered == n {
                for (node, state, _) in &frontier {
                    let delta = self.end_features(state);
                    let delta_score = delta.dot(weights);
                    goal_arcs.push(Arc {
                        prev: *node,
                        option: None,
                        delta,
                        delta_score,
                    });
                }
                break;
            }
            for (node, state, best) in &frontier {
                for &oi in &from[covered] {
                    let opt = &options[oi];
                    let mut delta = opt.features.clone();
                    let next_state = self.extend(state, opt, &mut delta);
                    let delta_score = delta.dot(weights);
                    let score = best + delta_score;
                    let target = covered + opt.len;
                    let arc = Arc {
                        prev: *node,
                        option: Some(oi),
                        delta,
                        delta_score,
                    };
                    match stacks[target].get(&next_state) {
                        Some(&id) => {
                            let nd = &mut nodes[id];
                            if score > nd.best {
                                nd.best = score;
                            }
                            nd.arcs.push(arc);
                        }
                        None => {
                            let id = nodes.len();
                            nodes.push(Node {
                                state: next_state.clone(),
                                best: score,
                                arcs: vec![arc],
                            });
                            stacks[target].insert(next_state, id);
                        }
                    }
                }
            }
        }
        (nodes, options, goal_arcs)
    }

    /// The `n` best distinct outputs, best first. Ties keep generation
    /// order.
    pub fn nbest(&self, weights: &Weights, source: &Sentence, n: usize) -> Result<Vec<Translation>> {
        let weights = weights.aligned_to(&self.layout)?;
        Ok(self.nbest_aligned(&weights.values, source, n))
    }

    fn nbest_aligned(&self, weights: &[f64], source: &Sentence, n: usize) -> Vec<Translation> {
        let (nodes, options, goal_arcs) = self.search(weights, source);
        let best = |node: Option<usize>| node.map_or(0.0, |i| nodes[i].best);
        // path arena: (arc reference, parent path); usize::MAX ends the chain
        let mut paths: Vec<(Option<usize>, usize, usize)> = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut seq = 0;
        for (ai, arc) in goal_arcs.iter().enumerate() {
            paths.push((None, ai, usize::MAX));
            heap.push(Partial {
                priority: best(arc.prev) + arc.delta_score,
                seq,
                node: arc.prev,
                path: paths.len() - 1,
            });
            seq += 1;
        }
        let mut out: Vec<Translation> = Vec::new();
        let mut seen: HashSet<Sentence> = HashSet::new();
        let max_pops = (1000 * n).max(100_000);
        let mut pops = 0;
        while let Some(p) = heap.pop() {
            pops += 1;
            if pops > max_pops || out.len() >= n {
                break;
            }
            let suffix = p.priority - best(p.node);
            match p.node {
                Some(id) => {
                    for (ai, arc) in nodes[id].arcs.iter().enumerate() {
                        paths.push((Some(id), ai, p.path));
                        heap.push(Partial {
                            priority: best(arc.prev) + arc.delta_score + suffix,
                            seq,
                            node: arc.prev,
                            path: paths.len() - 1,
                        });
                        seq += 1;
                    }
                }
                None => {
                    // complete: walk the chain forward from the start
                    let mut features = self.layout.zeros();
                    let mut tokens: Vec<String> = Vec::new();
                    let mut cursor = p.path;
                    while cursor != usize::MAX {
                        let (node, ai, parent) = paths[cursor];
                        let arc = match node {
                            Some(id) => &nodes[id].arcs[ai],
                            None => &goal_arcs[ai],
                        };
                        features += &arc.delta;
                        if let Some(oi) = arc.option {
                            tokens.extend(options[oi].target.iter().cloned());
                        }
                        cursor = parent;
                    }
                    let surface = debpe(&Sentence::from_tokens_unchecked(tokens));
                    if seen.insert(surface.clone()) {
                        let score = features.dot(weights);
                        out.push(Translation {
                            tokens: surface,
                            features,
                            score,
                        });
                    }
                }
            }
        }
        out
    }

    /// Highest-scoring output; the first entry of [`Decoder::nbest`].
    pub fn decode(&self, weights: &Weights, source: &Sentence) -> Result<Translation> {
        let weights = weights.aligned_to(&self.layout)?;
        Ok(self.decode_aligned(&weights.values, source))
    }

    fn decode_aligned(&self, weights: &[f64], source: &Sentence) -> Translation {
        self.nbest_aligned(weights, source, 1)
            .into_iter()
            .next()
            .expect("pass-through guarantees a complete hypothesis")
    }

    /// Decodes sentences in parallel, preserving order.
    pub fn decode_corpus(&self, weights: &Weights, sources: &[Sentence]) -> Result<Vec<Translation>> {
        let weights = weights.aligned_to(&self.layout)?;
        Ok(sources
            .par_iter()
            .map(|s| self.decode_aligned(&weights.values, s))
            .collect())
    }

    pub fn nbest_corpus(&self, weights: &Weights, sources: &[Sentence], n: usize) -> Result<Vec<Vec<Translation>>> {
        let weights = weights.aligned_to(&self.layout)?;
        Ok(sources
            .par_iter()
            .map(|s| self.nbest_aligned(&weights.values, s, n))
            .collect())
    }
}
