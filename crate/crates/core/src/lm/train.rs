use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Entry, NGramLanguageModel, BOS, EOS, NEVER, UNK};
use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// Discounting used when counts-of-counts cannot support modified
/// Kneser-Ney discount estimation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountFallback {
    /// Witten-Bell interpolation for the whole model.
    WittenBell,
    /// Fixed discounts `(D1, D2, D3+)` for the orders that need them.
    Fixed([f64; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub order: usize,
    /// Count singleton tokens as `<unk>` so the unknown token gets an
    /// estimated probability.
    pub unk_from_singletons: bool,
    pub fallback: DiscountFallback,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 5,
            unk_from_singletons: true,
            fallback: DiscountFallback::WittenBell,
        }
    }
}

/// Smoothing actually applied, per order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Smoothing {
    ModifiedKneserNey([f64; 3]),
    WittenBell,
}

impl Smoothing {
    fn discount(&self, count: u64) -> f64 {
        match *self {
            Smoothing::ModifiedKneserNey(d) => match count {
                0 => 0.0,
                1 => d[0],
                2 => d[1],
                _ => d[2],
            },
            Smoothing::WittenBell => 0.0,
        }
    }
}

/// Modified Kneser-Ney discounts from counts-of-counts, if all are usable.
fn estimate_discounts<'a>(counts: impl Iterator<Item = &'a u64>) -> Option<[f64; 3]> {
    let mut t = [0u64; 5];
    for &c in counts {
        if (1..=4).contains(&c) {
            t[c as usize] += 1;
        }
    }
    if t[1..].iter().any(|&x| x == 0) {
        return None;
    }
    let t = t.map(|x| x as f64);
    let y = t[1] / (t[1] + 2.0 * t[2]);
    let d = [
        1.0 - 2.0 * y * t[2] / t[1],
        2.0 - 3.0 * y * t[3] / t[2],
        3.0 - 4.0 * y * t[4] / t[3],
    ];
    let valid = d
        .iter()
        .enumerate()
        .all(|(k, &dk)| dk > 0.0 && dk < (k + 1) as f64);
    valid.then_some(d)
}

type Counts = HashMap<Box<[u32]>, u64>;

/// Trains an interpolated backoff model. Sentences are padded with `<s>`
/// and `</s>`. Lower orders use continuation counts except for n-grams
/// starting with `<s>`, which keep their raw counts.
pub fn train_lm<'a, I>(corpus: I, cfg: &LmConfig) -> Result<(NGramLanguageModel, Vec<Smoothing>)>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let order = cfg.order;
    if order == 0 {
        return Err(Error::InvalidArgument("LM order must be >= 1".into()));
    }
    let sentences: Vec<&Sentence> = corpus.into_iter().collect();
    if sentences.is_empty() {
        return Err(Error::InsufficientData(
            "LM training corpus is empty".into(),
        ));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in &sentences {
        for t in s.tokens() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let keep = |t: &str| !cfg.unk_from_singletons || freq[t] > 1;
    let words: BTreeSet<&str> = freq
        .keys()
        .copied()
        .filter(|t| keep(t) && ![BOS, EOS, UNK].contains(t))
        .collect();
    let mut vocab = vec![UNK.to_owned(), BOS.to_owned(), EOS.to_owned()];
    vocab.extend(words.iter().map(|w| (*w).to_owned()));
    let mut model = NGramLanguageModel::with_vocab(order, vocab);

    let mut raw: Vec<Counts> = vec![HashMap::new(); order];
    for s in &sentences {
        let mut ids = Vec::with_capacity(s.len() + 2);
        ids.push(model.bos);
        ids.extend(
            s.tokens()
                .iter()
                .map(|t| if keep(t) { model.id(t) } else { model.unk }),
        );
        ids.push(model.eos);
        for n in 1..=order {
            for (start, w) in ids.windows(n).enumerate() {
                // <s> is never predicted on its own
                if n == 1 && start == 0 {
                    continue;
                }
                *raw[n - 1].entry(w.into()).or_default() += 1;
            }
        }
    }

    // adjusted counts: continuation counts below the top order
    let mut adjusted: Vec<Counts> = Vec::with_capacity(order);
    for n in 1..=order {
        if n == order {
            adjusted.push(raw[n - 1].clone());
            continue;
        }
        let mut cont: Counts = HashMap::new();
        for g in raw[n].keys() {
            *cont.entry(g[1..].into()).or_default() += 1;
        }
        let mut a: Counts = HashMap::with_capacity(raw[n - 1].len());
        for (g, &c) in &raw[n - 1] {
            let v = if g[0] == model.bos {
                c
            } else {
                cont.get(g).copied().unwrap_or(c)
            };
            a.insert(g.clone(), v);
        }
        adjusted.push(a);
    }

    let estimated: Vec<Option<[f64; 3]>> = adjusted
        .iter()
        .map(|a| estimate_discounts(a.values()))
        .collect();
    let smoothing: Vec<Smoothing> = match cfg.fallback {
        DiscountFallback::WittenBell if estimated.iter().any(Option::is_none) => {
            log::warn!("counts too sparse for modified Kneser-Ney; using Witten-Bell");
            vec![Smoothing::WittenBell; order]
        }
        DiscountFallback::WittenBell => estimated
            .into_iter()
            .map(|d| Smoothing::ModifiedKneserNey(d.expect("checked")))
            .collect(),
        DiscountFallback::Fixed(fixed) => estimated
            .into_iter()
            .map(|d| Smoothing::ModifiedKneserNey(d.unwrap_or(fixed)))
            .collect(),
    };
    // Witten-Bell works on raw counts at every order
    let counts = if smoothing[0] == Smoothing::WittenBell {
        &raw
    } else {
        &adjusted
    };

    let predictable = model.vocab.len() - 1;
    for n in 1..=order {
        let sm = smoothing[n - 1];
        let mut groups: HashMap<&[u32], Vec<(&Box<[u32]>, u64)>> = HashMap::new();
        for (g, &c) in &counts[n - 1] {
            groups.entry(&g[..n - 1]).or_default().push((g, c));
        }
        let mut table: HashMap<Box<[u32]>, Entry> = HashMap::new();
        let mut context_backoff: Vec<(Box<[u32]>, f64)> = Vec::new();
        for (ctx, members) in groups {
            let total: f64 = members.iter().map(|m| m.1 as f64).sum();
            let (denominator, gamma) = match sm {
                Smoothing::ModifiedKneserNey(_) => {
                    let mass: f64 = members.iter().map(|m| sm.discount(m.1)).sum();
                    (total, mass / total)
                }
                Smoothing::WittenBell => {
                    let types = members.len() as f64;
                    (total + types, types / (total + types))
                }
            };
            for (g, c) in members {
                let lower = if n == 1 {
                    1.0 / predictable as f64
                } else {
                    10f64.powf(model.logp_ids(&g[1..n - 1], g[n - 1]))
                };
                let p = (c as f64 - sm.discount(c)) / denominator + gamma * lower;
                table.insert(
                    g.clone(),
                    Entry {
                        logp: p.log10(),
                        backoff: 0.0,
                    },
                );
            }
            if n == 1 {
                // the unigram level interpolates with the uniform distribution
                for id in 0..model.vocab.len() as u32 {
                    if id != model.bos {
                        table.entry(Box::new([id])).or_insert(Entry {
                            logp: (gamma / predictable as f64).log10(),
                            backoff: 0.0,
                        });
                    }
                }
            } else {
                context_backoff.push((ctx.into(), gamma.log10()));
            }
        }
        if n == 1 {
            table.insert(
                Box::new([model.bos]),
                Entry {
                    logp: NEVER,
                    backoff: 0.0,
                },
            );
        }
        model.tables[n - 1] = table;
        for (ctx, bo) in context_backoff {
            if let Some(e) = model.tables[n - 2].get_mut(&ctx) {
                e.backoff = bo;
            }
        }
    }
    Ok((model, smoothing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| Sentence::from_line(l)).collect()
    }

    fn tiny_cfg(order: usize) -> LmConfig {
        LmConfig {
            order,
            unk_from_singletons: false,
            fallback: DiscountFallback::Fixed([0.5, 1.0, 1.5]),
        }
    }

    #[test]
    fn default_order_is_five() {
        assert_eq!(LmConfig::default().order, 5);
    }

    #[test]
    fn unigram_by_hand() {
        // events: a a b </s>; predictable vocabulary {a, b, </s>, <unk>}
        let (lm, _) = train_lm(&corpus(&["a a b"]), &tiny_cfg(1)).unwrap();
        let gamma = (0.5 * 2.0 + 1.0 * 1.0) / 4.0;
        let p_a = (2.0 - 1.0) / 4.0 + gamma / 4.0;
        assert!((lm.prob(&[], "a") - f64::log10(p_a)).abs() < 1e-12);
        let p_unk = gamma / 4.0;
        assert!((lm.prob(&[], "zzz") - f64::log10(p_unk)).abs() < 1e-12);
    }

    #[test]
    fn bigram_by_hand() {
        // corpus "a b a": padded <s> a b a </s>
        let (lm, sm) = train_lm(&corpus(&["a b a"]), &tiny_cfg(2)).unwrap();
        assert_eq!(sm, vec![Smoothing::ModifiedKneserNey([0.5, 1.0, 1.5]); 2]);
        // unigram continuation counts: a <- {<s>, b} = 2, b <- {a} = 1, </s> <- {a} = 1
        let uni_gamma = (0.5 * 2.0 + 1.0 * 1.0) / 4.0;
        let pu = |a: f64| (a - if a == 1.0 { 0.5 } else { 1.0 }).max(0.0) / 4.0 + uni_gamma / 4.0;
        let (pu_a, pu_b, pu_eos) = (pu(2.0), pu(1.0), pu(1.0));
        assert!((lm.prob(&[], "b") - pu_b.log10()).abs() < 1e-12);
        // bigram context "a": a b (1), a </s> (1)
        let g_a = (0.5 + 0.5) / 2.0;
        let p_b_a = 0.5 / 2.0 + g_a * pu_b;
        let p_eos_a = 0.5 / 2.0 + g_a * pu_eos;
        assert!((lm.prob(&["a"], "b") - p_b_a.log10()).abs() < 1e-12);
        assert!((lm.prob(&["a"], "</s>") - p_eos_a.log10()).abs() < 1e-12);
        // unseen continuation backs off: p(a | a) = γ(a) p(a)
        assert!((lm.prob(&["a"], "a") - (g_a * pu_a).log10()).abs() < 1e-12);
        // context "<s>": <s> a (1)
        let p_a_bos = 0.5 / 1.0 + 0.5 * pu_a;
        assert!((lm.prob(&["<s>"], "a") - p_a_bos.log10()).abs() < 1e-12);
    }

    #[test]
    fn witten_bell_fallback_on_sparse_counts() {
        let (lm, sm) = train_lm(
            &corpus(&["a b a"]),
            &LmConfig {
                order: 2,
                unk_from_singletons: false,
                ..LmConfig::default()
            },
        )
        .unwrap();
        assert_eq!(sm, vec![Smoothing::WittenBell; 2]);
        // unigram: raw counts a 2, b 1, </s> 1; 3 types; |V| = 4
        let p_b = (1.0 + 3.0 / 4.0) / (4.0 + 3.0);
        assert!((lm.prob(&[], "b") - f64::log10(p_b)).abs() < 1e-12);
        assert_normalized(&lm, &[&["a"], &["b"], &["<s>"], &[]]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let empty: Vec<Sentence> = Vec::new();
        assert!(train_lm(&empty, &LmConfig::default()).is_err());
    }

    fn assert_normalized(lm: &NGramLanguageModel, contexts: &[&[&str]]) {
        for ctx in contexts {
            let total: f64 = lm.predictable().map(|w| 10f64.powf(lm.prob(ctx, w))).sum();
            assert!((total - 1.0).abs() < 1e-6, "{ctx:?}: {total}");
        }
    }

    fn random_corpus(seed: u64, n: usize) -> Vec<Sentence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = [
            "the", "cat", "dog", "sat", "on", "mat", "a", "ran", "big", "red",
        ];
        (0..n)
            .map(|_| {
                let len = rng.gen_range(0..9);
                let toks: Vec<&str> = (0..len)
                    .map(|_| words[rng.gen_range(0..words.len())])
                    .collect();
                Sentence::from_line(&toks.join(" "))
            })
            .collect()
    }

    #[test]
    fn conditional_distributions_normalize() {
        let c = random_corpus(1, 300);
        for fallback in [
            DiscountFallback::Fixed([0.5, 1.0, 1.5]),
            DiscountFallback::WittenBell,
        ] {
            let cfg = LmConfig {
                order: 3,
                fallback,
                ..LmConfig::default()
            };
            let (lm, _) = train_lm(&c, &cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let vocab: Vec<String> = lm.vocab().to_vec();
            for _ in 0..100 {
                let len = rng.gen_range(0..4);
                let ctx: Vec<&str> = (0..len)
                    .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
                    .collect();
                assert_normalized(&lm, &[&ctx]);
            }
        }
    }

    #[test]
    fn arpa_round_trip_is_exact() {
        let c = random_corpus(3, 200);
        let (lm, _) = train_lm(
            &c,
            &LmConfig {
                order: 4,
                ..LmConfig::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        lm.write_arpa(&mut buf).unwrap();
        let back = NGramLanguageModel::read_arpa(&buf[..]).unwrap();
        for s in random_corpus(4, 1000) {
            assert_eq!(lm.score(&s), back.score(&s));
        }
        let mut again = Vec::new();
        back.write_arpa(&mut again).unwrap();
        assert_eq!(
            String::from_utf8(again).unwrap(),
            String::from_utf8(buf).unwrap()
        );
    }

    #[test]
    fn memorized_sentence_beats_shuffle() {
        let train = corpus(&[
            "the cat sat on the mat",
            "the cat sat on the mat",
            "a dog ran",
        ]);
        let (lm, _) = train_lm(&train, &tiny_cfg(3)).unwrap();
        let ordered = lm.perplexity(&corpus(&["the cat sat on the mat"])).unwrap();
        let shuffled = lm.perplexity(&corpus(&["mat the on sat cat the"])).unwrap();
        assert!(ordered < shuffled);
    }

    #[test]
    fn singletons_feed_unknown_token() {
        let (lm, _) = train_lm(
            &corpus(&["a a rare"]),
            &LmConfig {
                order: 1,
                ..LmConfig::default()
            },
        )
        .unwrap();
        assert!(!lm.vocab().iter().any(|w| w == "rare"));
        assert_eq!(lm.prob(&[], "rare"), lm.prob(&[], "<unk>"));
    }

    proptest! {
        #[test]
        fn incremental_scores_sum_to_sentence_score(seed in 0u64..500) {
            let c = random_corpus(seed, 60);
            let (lm, _) = train_lm(&c, &LmConfig { order: 3, ..LmConfig::default() }).unwrap();
            for s in random_corpus(seed + 1, 10) {
                let mut state = lm.begin_state();
                let mut total = 0.0;
                for t in s.tokens() {
                    let (p, next) = lm.score_state(&state, t);
                    total += p;
                    state = next;
                }
                total += lm.score_end(&state);
                prop_assert!((total - lm.score(&s)).abs() < 1e-9);
                // the truncated state scores like the full history
                let full: Vec<&str> = std::iter::once("<s>").chain(s.tokens().iter().map(String::as_str)).collect();
                prop_assert!((lm.prob(&full, "</s>") - lm.score_end(&state)).abs() < 1e-12);
            }
        }
    }
}
