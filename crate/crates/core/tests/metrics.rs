mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use usmt_gec::metrics::{
    extract_system_edits, gleu, gleu_from_stats, gleu_sentence_stats, m2_score, read_m2, Counts, Edit, GleuConfig,
    GleuStats, MaxMatchConfig, MetricReport,
};
use usmt_gec::Sentence;

#[test]
fn max_match_overlap_equals_exhaustive_enumeration() {
    let mut r = rng(21);
    let cfg = MaxMatchConfig::default();
    for case in 0..3000 {
        let (src, hyp, gold) = random_m2_fixture(&mut r, 5);
        let sys = extract_system_edits(&src, &hyp, &gold, &cfg);
        let hits = sys.iter().collect::<std::collections::HashSet<_>>().iter().filter(|e| gold.contains(e)).count();
        let (best_hits, fewest) = oracle_max_overlap(&src, &hyp, &gold, cfg.max_unchanged);
        assert_eq!(hits, best_hits, "case {case}: {src:?} -> {hyp:?}, gold {gold:?}, got {sys:?}");
        assert_eq!(sys.len(), fewest, "case {case}");
        // the edits reproduce the hypothesis
        assert_eq!(usmt_gec::metrics::apply_edits(&src, &sys), hyp);
    }
}

#[test]
fn paper_example_edits() {
    let t = |s: &str| toks(s);
    let gold = vec![Edit::new(1, 2, &["goes"])];
    let sys = extract_system_edits(&t("He go home"), &t("He goes home"), &gold, &MaxMatchConfig::default());
    assert_eq!(sys, gold);
    let gold = vec![Edit::new(1, 2, &["c", "d"])];
    let sys = extract_system_edits(&t("a b"), &t("a c d"), &gold, &MaxMatchConfig::default());
    assert_eq!(sys, gold);
}

#[test]
fn corpus_scores_sum_sentence_counts_for_single_annotator() {
    let text = "S a b c\nA 1 2|||R|||x|||REQUIRED|||-NONE-|||0\n\nS d e\nA 2 2|||M|||f|||REQUIRED|||-NONE-|||0\n\nS g\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\n";
    let gold = read_m2(text.as_bytes()).unwrap();
    let hyps: Vec<Sentence> = ["a x c", "d e", "h"].iter().map(|s| Sentence::from_line(s)).collect();
    let (rep, detail) = m2_score(&gold, &hyps, &MaxMatchConfig::default()).unwrap();
    let sum = detail.iter().fold(Counts::default(), |a, d| a + d.counts);
    assert_eq!(sum, rep.counts());
    assert_eq!((rep.tp, rep.fp, rep.fn_), (1, 1, 1));
    assert!((rep.precision - 0.5).abs() < 1e-12);
    assert!((rep.f05 - 0.5).abs() < 1e-12);
}

#[test]
fn empty_system_and_empty_gold_score_one() {
    let gold = read_m2("S a b\n\nS c\n\n".as_bytes()).unwrap();
    let hyps = vec![Sentence::from_line("a b"), Sentence::from_line("c")];
    let (rep, _) = m2_score(&gold, &hyps, &MaxMatchConfig::default()).unwrap();
    assert_eq!((rep.precision, rep.recall, rep.f05), (1.0, 1.0, 1.0));
}

#[test]
fn gleu_matches_brute_force_counter() {
    let mut r = rng(22);
    let vocab = ["the", "cat", "sat", "on", "mat", "a"];
    for _ in 0..50 {
        let k = r.gen_range(1..=3);
        let corpus: Vec<(Vec<String>, Vec<String>, Vec<String>)> = (0..k)
            .map(|_| {
                let mut s = || random_sentence(&mut r, &vocab, 0, 7).into_tokens();
                (s(), s(), s())
            })
            .collect();
        let triples: Vec<(Sentence, Sentence, Vec<Sentence>)> = corpus
            .iter()
            .map(|(s, h, rf)| {
                (
                    Sentence::new(s.clone()).unwrap(),
                    Sentence::new(h.clone()).unwrap(),
                    vec![Sentence::new(rf.clone()).unwrap()],
                )
            })
            .collect();
        let got = gleu(&triples, &GleuConfig::default()).unwrap();
        let want = oracle_gleu(&corpus, 4);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn gleu_two_sentence_fixture() {
    let s = |x: &str| Sentence::from_line(x);
    let corpus = vec![
        (s("he go to school"), s("he goes to school"), vec![s("he goes to school")]),
        (s("i has a apple"), s("i has an apple"), vec![s("i have an apple")]),
    ];
    let plain: Vec<_> = corpus
        .iter()
        .map(|(a, b, r)| (a.tokens().to_vec(), b.tokens().to_vec(), r[0].tokens().to_vec()))
        .collect();
    let got = gleu(&corpus, &GleuConfig::default()).unwrap();
    assert!((got - oracle_gleu(&plain, 4)).abs() < 1e-12);
    assert!(got > 0.0 && got < 1.0);
}

#[test]
fn gleu_reference_order_barely_matters() {
    let mut r = rng(23);
    let vocab = ["the", "cat", "sat", "on", "mat", "a", "dog"];
    let mutate = |r: &mut rand_chacha::ChaCha8Rng, base: &[String], k: usize| -> Sentence {
        let mut t = base.to_vec();
        for _ in 0..k {
            let at = r.gen_range(0..t.len());
            t[at] = vocab[r.gen_range(0..vocab.len())].to_owned();
        }
        Sentence::new(t).unwrap()
    };
    let corpus: Vec<(Sentence, Sentence, Vec<Sentence>)> = (0..60)
        .map(|_| {
            let base = random_sentence(&mut r, &vocab, 8, 14).into_tokens();
            let src = mutate(&mut r, &base, 2);
            let hyp = mutate(&mut r, src.tokens(), 1);
            let refs = (0..3).map(|_| mutate(&mut r, &base, 1)).collect();
            (src, hyp, refs)
        })
        .collect();
    let a = gleu(&corpus, &GleuConfig::default()).unwrap();
    let mut rev = corpus.clone();
    for c in &mut rev {
        c.2.reverse();
    }
    let b = gleu(&rev, &GleuConfig { seed: 99, ..GleuConfig::default() }).unwrap();
    assert!((0.0..=1.0).contains(&a));
    assert!((a - b).abs() < 1e-3, "{a} vs {b}");
}

proptest! {
    #[test]
    fn gleu_in_unit_interval(
        s in proptest::collection::vec(0u8..5, 0..8),
        h in proptest::collection::vec(0u8..5, 0..8),
        rf in proptest::collection::vec(0u8..5, 1..8),
    ) {
        let to = |v: &[u8]| Sentence::new(v.iter().map(|x| format!("w{x}")).collect()).unwrap();
        let st = gleu_sentence_stats(&to(&s), &to(&h), &to(&rf), 4);
        let g = gleu_from_stats(&st);
        prop_assert!((0.0..=1.0).contains(&g));
        let mut twice = GleuStats::zeros(4);
        twice.add(&st);
        twice.add(&st);
        prop_assert!((gleu_from_stats(&twice) - g).abs() < 1e-12);
    }

    #[test]
    fn f05_matches_formula(tp in 0u64..5000, fp in 0u64..5000, fn_ in 0u64..5000) {
        let rep = MetricReport::from_counts(Counts { tp, fp, fn_ });
        prop_assert!((0.0..=1.0).contains(&rep.f05));
        if tp + fp > 0 && tp + fn_ > 0 && tp > 0 {
            let (p, r) = (tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fn_) as f64);
            prop_assert!((rep.f05 - 1.25 * p * r / (0.25 * p + r)).abs() < 1e-12);
        }
    }
}
