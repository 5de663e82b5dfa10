use std::collections::HashMap;
use std::ops::Range;

use super::symmetrize::SymmetricAligner;
use super::AlignedPair;
use crate::corpus::Sentence;
use crate::phrase_table::{PhraseTable, PhraseTableEntry};

pub const DEFAULT_MAX_PHRASE_LEN: usize = 5;

/// Source and target token ranges of one extracted phrase pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PhraseSpan {
    pub source: Range<usize>,
    pub target: Range<usize>,
}

fn span_key(p: &PhraseSpan) -> (usize, usize, usize, usize) {
    (p.source.start, p.source.end, p.target.start, p.target.end)
}

/// All phrase pairs consistent with the links, both sides at most
/// `max_len` tokens, sorted by span bounds. Unaligned boundary words are
/// absorbed on either side.
pub fn extract_phrases(pair: &AlignedPair, max_len: usize) -> Vec<PhraseSpan> {
    let (n, m) = (pair.source.len(), pair.target.len());
    let mut tgt_aligned = vec![false; m];
    let mut by_src: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in &pair.links {
        tgt_aligned[j] = true;
        by_src[i].push(j);
    }
    let mut by_tgt: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(i, j) in &pair.links {
        by_tgt[j].push(i);
    }
    let mut out = Vec::new();
    for s_start in 0..n {
        for s_end in s_start + 1..=n.min(s_start + max_len) {
            let mut lo = usize::MAX;
            let mut hi = 0;
            for i in s_start..s_end {
                for &j in &by_src[i] {
                    lo = lo.min(j);
                    hi = hi.max(j + 1);
                }
            }
            if lo == usize::MAX || hi - lo > max_len {
                continue;
            }
            let consistent = (lo..hi).all(|j| by_tgt[j].iter().all(|&i| i >= s_start && i < s_end));
            if !consistent {
                continue;
            }
            let mut t_start = lo;
            loop {
                let mut t_end = hi;
                while t_end - t_start <= max_len {
                    out.push(PhraseSpan {
                        source: s_start..s_end,
                        target: t_start..t_end,
                    });
                    if t_end == m || tgt_aligned[t_end] {
                        break;
                    }
                    t_end += 1;
                }
                if t_start == 0 || tgt_aligned[t_start - 1] || hi - (t_start - 1) > max_len {
                    break;
                }
                t_start -= 1;
            }
        }
    }
    out.sort_by_key(span_key);
    out
}

/// Reference extraction: checks every block for consistency directly.
pub fn brute_force_phrases(pair: &AlignedPair, max_len: usize) -> Vec<PhraseSpan> {
    let (n, m) = (pair.source.len(), pair.target.len());
    let mut out = Vec::new();
    for ss in 0..n {
        for se in ss + 1..=n {
            for ts in 0..m {
                for te in ts + 1..=m {
                    if se - ss > max_len || te - ts > max_len {
                        continue;
                    }
                    let mut inside = 0;
                    let mut crossing = false;
                    for &(i, j) in &pair.links {
                        let si = (ss..se).contains(&i);
                        let tj = (ts..te).contains(&j);
                        if si && tj {
                            inside += 1;
                        } else if si || tj {
                            crossing = true;
                        }
                    }
                    if inside > 0 && !crossing {
                        out.push(PhraseSpan {
                            source: ss..se,
                            target: ts..te,
                        });
                    }
                }
            }
        }
    }
    out.sort_by_key(span_key);
    out
}

const NULL: &str = "";

/// Word translation tables `w(t | s)` and `w(s | t)` from link counts;
/// unaligned words count against the null word.
struct LexicalTables {
    fwd: HashMap<(String, String), f64>,
    bwd: HashMap<(String, String), f64>,
}

impl LexicalTables {
    fn new(pairs: &[AlignedPair]) -> Self {
        let mut joint: HashMap<(String, String), f64> = HashMap::new();
        let mut src_total: HashMap<String, f64> = HashMap::new();
        let mut tgt_total: HashMap<String, f64> = HashMap::new();
        let mut add = |s: &str, t: &str| {
            *joint.entry((s.to_owned(), t.to_owned())).or_default() += 1.0;
            *src_total.entry(s.to_owned()).or_default() += 1.0;
            *tgt_total.entry(t.to_owned()).or_default() += 1.0;
        };
        for p in pairs {
            let mut src_aligned = vec![false; p.source.len()];
            let mut tgt_aligned = vec![false; p.target.len()];
            for &(i, j) in &p.links {
                src_aligned[i] = true;
                tgt_aligned[j] = true;
                add(&p.source.tokens()[i], &p.target.tokens()[j]);
            }
            for (i, w) in p.source.iter().enumerate() {
                if !src_aligned[i] {
                    add(w, NULL);
                }
            }
            for (j, w) in p.target.iter().enumerate() {
                if !tgt_aligned[j] {
                    add(NULL, w);
                }
            }
        }
        let mut fwd = HashMap::with_capacity(joint.len());
        let mut bwd = HashMap::with_capacity(joint.len());
        for ((s, t), c) in joint {
            let (fs, bt) = (c / src_total[&s], c / tgt_total[&t]);
            fwd.insert((s.clone(), t.clone()), fs);
            bwd.insert((s, t), bt);
        }
        LexicalTables { fwd, bwd }
    }

    /// `lex(t̄ | s̄)` when `forward`, else `lex(s̄ | t̄)`.
    fn weight(&self, pair: &AlignedPair, span: &PhraseSpan, forward: bool) -> f64 {
        let src = pair.source.tokens();
        let tgt = pair.target.tokens();
        let lookup = |s: &str, t: &str| {
            let table = if forward { &self.fwd } else { &self.bwd };
            table
                .get(&(s.to_owned(), t.to_owned()))
                .copied()
                .unwrap_or(0.0)
        };
        let (outer, inner) = if forward {
            (span.target.clone(), span.source.clone())
        } else {
            (span.source.clone(), span.target.clone())
        };
        let mut product = 1.0;
        for k in outer {
            let partners: Vec<usize> = pair
                .links
                .iter()
                .filter_map(|&(i, j)| {
                    let (mine, other) = if forward { (j, i) } else { (i, j) };
                    (mine == k && inner.contains(&other)).then_some(other)
                })
                .collect();
            let factor = if partners.is_empty() {
                if forward {
                    lookup(NULL, &tgt[k])
                } else {
                    lookup(&src[k], NULL)
                }
            } else {
                let sum: f64 = partners
                    .iter()
                    .map(|&o| {
                        if forward {
                            lookup(&src[o], &tgt[k])
                        } else {
                            lookup(&src[k], &tgt[o])
                        }
                    })
                    .sum();
                sum / partners.len() as f64
            };
            product *= factor;
        }
        product
    }
}

/// Relative-frequency phrase table from aligned pairs. Entries are sorted
/// by source then target phrase; lexical weights take the best value over
/// all occurrences of a pair.
pub fn table_from_alignments(pairs: &[AlignedPair], max_len: usize) -> PhraseTable {
    let lex = LexicalTables::new(pairs);
    type Key = (Vec<String>, Vec<String>);
    let mut stats: HashMap<Key, (f64, f64, f64)> = HashMap::new();
    let mut src_count: HashMap<Vec<String>, f64> = HashMap::new();
    let mut tgt_count: HashMap<Vec<String>, f64> = HashMap::new();
    for p in pairs {
        for span in extract_phrases(p, max_len) {
            let s = p.source.tokens()[span.source.clone()].to_vec();
            let t = p.target.tokens()[span.target.clone()].to_vec();
            let lf = lex.weight(p, &span, true);
            let lb = lex.weight(p, &span, false);
            *src_count.entry(s.clone()).or_default() += 1.0;
            *tgt_count.entry(t.clone()).or_default() += 1.0;
            let e = stats.entry((s, t)).or_insert((0.0, 0.0, 0.0));
            e.0 += 1.0;
            e.1 = e.1.max(lf);
            e.2 = e.2.max(lb);
        }
    }
    let mut keys: Vec<Key> = stats.keys().cloned().collect();
    keys.sort();
    PhraseTable::from_entries(keys.into_iter().map(|k| {
        let (c, lf, lb) = stats[&k];
        PhraseTableEntry {
            phi_fwd: c / src_count[&k.0],
            lex_fwd: lf,
            phi_bwd: c / tgt_count[&k.1],
            lex_bwd: lb,
            source: k.0,
            target: k.1,
        }
    }))
}

/// Aligns the corpus in both directions and estimates a phrase table.
pub fn estimate_refined_table(
    pairs: &[(Sentence, Sentence)],
    aligner: &SymmetricAligner,
    max_len: usize,
) -> PhraseTable {
    table_from_alignments(&aligner.align_all(pairs), max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::Links;
    use proptest::prelude::*;

    fn aligned(s: &str, t: &str, links: &[(usize, usize)]) -> AlignedPair {
        AlignedPair::new(
            Sentence::from_line(s),
            Sentence::from_line(t),
            links.iter().copied().collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_on_three_tokens_gives_six_pairs() {
        let p = aligned("a b c", "a b c", &[(0, 0), (1, 1), (2, 2)]);
        let got = extract_phrases(&p, 5);
        assert_eq!(got.len(), 6);
        assert!(got.iter().all(|s| s.source == s.target));
    }

    #[test]
    fn unaligned_pair_yields_nothing() {
        assert!(extract_phrases(&aligned("a b", "c d", &[]), 5).is_empty());
    }

    #[test]
    fn single_link_extends_over_unaligned_words() {
        let got = extract_phrases(&aligned("a b", "c d", &[(0, 0)]), 5);
        let want = vec![
            PhraseSpan {
                source: 0..1,
                target: 0..1,
            },
            PhraseSpan {
                source: 0..1,
                target: 0..2,
            },
            PhraseSpan {
                source: 0..2,
                target: 0..1,
            },
            PhraseSpan {
                source: 0..2,
                target: 0..2,
            },
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn max_len_bounds_both_sides() {
        let p = aligned("a b c", "x y z", &[(0, 0), (1, 1), (2, 2)]);
        assert!(extract_phrases(&p, 2)
            .iter()
            .all(|s| s.source.len() <= 2 && s.target.len() <= 2));
        assert_eq!(extract_phrases(&p, 2).len(), 5);
    }

    #[test]
    fn identity_corpus_gives_unit_probabilities() {
        let p = aligned("a b c", "a b c", &[(0, 0), (1, 1), (2, 2)]);
        let table = table_from_alignments(&[p], 5);
        assert_eq!(table.len(), 6);
        for e in table.entries() {
            assert_eq!((e.phi_fwd, e.phi_bwd), (1.0, 1.0));
            assert_eq!((e.lex_fwd, e.lex_bwd), (1.0, 1.0));
        }
    }

    #[test]
    fn relative_frequencies_by_hand() {
        let mut pairs = vec![aligned("go", "A", &[(0, 0)]); 3];
        pairs.push(aligned("go", "B", &[(0, 0)]));
        let table = table_from_alignments(&pairs, 5);
        let src = vec!["go".to_owned()];
        assert_eq!(table.get(&src, &["A".to_owned()]).unwrap().phi_fwd, 0.75);
        assert_eq!(table.get(&src, &["B".to_owned()]).unwrap().phi_fwd, 0.25);
        assert_eq!(table.get(&src, &["B".to_owned()]).unwrap().phi_bwd, 1.0);
        // w(A | go) = 3/4
        assert_eq!(table.get(&src, &["A".to_owned()]).unwrap().lex_fwd, 0.75);
    }

    #[test]
    fn lexical_weight_averages_multiple_links_and_uses_null() {
        // "a b" -> "x": both source words link to x; lex(x | a b) = (w(x|a) + w(x|b)) / 2
        let p1 = aligned("a b", "x", &[(0, 0), (1, 0)]);
        let p2 = aligned("a", "y", &[(0, 0)]);
        let p3 = aligned("c", "x z", &[(0, 0)]);
        let table = table_from_alignments(&[p1, p2, p3], 5);
        let tok = |s: &str| s.split(' ').map(str::to_owned).collect::<Vec<_>>();
        let e = table.get(&tok("a b"), &tok("x")).unwrap();
        // w(x|a) = 1/2, w(x|b) = 1
        assert!((e.lex_fwd - 0.75).abs() < 1e-12);
        // lex(a b | x): w(a|x) = 1/3, w(b|x) = 1/3 (x links: a, b, c)
        assert!((e.lex_bwd - 1.0 / 9.0).abs() < 1e-12);
        // z is unaligned: w(z | NULL) = 1
        let e = table.get(&tok("c"), &tok("x z")).unwrap();
        assert!((e.lex_fwd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_through_file_format() {
        let p = aligned("a b", "c d", &[(0, 1), (1, 0)]);
        let table = table_from_alignments(&[p], 5);
        let mut buf = Vec::new();
        table.write(&mut buf).unwrap();
        assert_eq!(PhraseTable::read(&buf[..]).unwrap(), table);
    }

    fn arb_pair() -> impl Strategy<Value = AlignedPair> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(n, m)| {
            proptest::collection::btree_set((0..n, 0..m), 0..8).prop_map(move |links: Links| {
                let s: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
                let t: Vec<String> = (0..m).map(|j| format!("t{j}")).collect();
                aligned(
                    &s.join(" "),
                    &t.join(" "),
                    &links.into_iter().collect::<Vec<_>>(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn extraction_matches_brute_force(p in arb_pair(), max_len in 1usize..=6) {
            prop_assert_eq!(extract_phrases(&p, max_len), brute_force_phrases(&p, max_len));
        }

        #[test]
        fn forward_probabilities_sum_to_one(ps in proptest::collection::vec(arb_pair(), 1..5)) {
            let table = table_from_alignments(&ps, 5);
            let mut sums: HashMap<Vec<String>, f64> = HashMap::new();
            for e in table.entries() {
                *sums.entry(e.source.clone()).or_default() += e.phi_fwd;
            }
            for s in sums.values() {
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
