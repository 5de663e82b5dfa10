#![allow(dead_code)]

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usmt_gec::decoder::FeatureLayout;
use usmt_gec::metrics::{apply_edits, Edit};
use usmt_gec::lm::{train_lm, DiscountFallback, LmConfig, NGramLanguageModel, WordClassMap};
use usmt_gec::phrase_table::{PhraseTable, PhraseTableEntry};
use usmt_gec::tuning::{Hypothesis, SufficientStats};
use usmt_gec::spellcheck::WordList;
use usmt_gec::fixture::{make_toy_corpus, ToyConfig};
use usmt_gec::pipeline::PipelineConfig;
use usmt_gec::Sentence;

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Edit distance with (ins, del, sub) counts, traced back from the end
/// preferring substitution, then deletion, then insertion.
pub fn oracle_edits<T: PartialEq>(a: &[T], b: &[T]) -> (usize, usize, usize, usize) {
    fn dist<T: PartialEq>(a: &[T], b: &[T], memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        let (i, j) = (a.len(), b.len());
        if let Some(d) = memo[i][j] {
            return d;
        }
        let d = if i == 0 {
            j
        } else if j == 0 {
            i
        } else {
            let c = usize::from(a[i - 1] != b[j - 1]);
            (dist(&a[..i - 1], &b[..j - 1], memo) + c)
                .min(dist(&a[..i - 1], b, memo) + 1)
                .min(dist(a, &b[..j - 1], memo) + 1)
        };
        memo[i][j] = Some(d);
        d
    }
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    let total = dist(a, b, &mut memo);
    let (mut i, mut j) = (a.len(), b.len());
    let (mut ins, mut del, mut sub) = (0, 0, 0);
    while i > 0 || j > 0 {
        let here = dist(&a[..i], &b[..j], &mut memo);
        if i > 0 && j > 0 {
            let c = usize::from(a[i - 1] != b[j - 1]);
            if dist(&a[..i - 1], &b[..j - 1], &mut memo) + c == here {
                sub += c;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist(&a[..i - 1], &b[..j], &mut memo) + 1 == here {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    (total, ins, del, sub)
}

/// One derivation: output tokens and feature values laid out like the
/// decoder's feature vector.
pub struct Derivation {
    pub output: Vec<String>,
    pub features: Vec<f64>,
}

/// Every segmentation of `source` into table phrases (plus pass-through
/// for tokens without a one-word entry), scored from scratch.
pub fn enumerate_derivations(
    table: &PhraseTable,
    lms: &[&NGramLanguageModel],
    class_lm: Option<(&NGramLanguageModel, &WordClassMap)>,
    layout: &FeatureLayout,
    source: &[String],
    pass_through_penalty: f64,
) -> Vec<Derivation> {
    let n = source.len();
    // options[start] = (len, target, scores, phrase penalty)
    let mut options: Vec<Vec<(usize, Vec<String>, [f64; 4], f64)>> = vec![Vec::new(); n];
    for start in 0..n {
        for len in 1..=(n - start) {
            for e in table.entries() {
                if e.source.as_slice() == &source[start..start + len] {
                    options[start].push((len, e.target.clone(), e.scores(), 1.0));
                }
            }
        }
        if !options[start].iter().any(|o| o.0 == 1) {
            options[start].push((1, vec![source[start].clone()], [1.0; 4], pass_through_penalty));
        }
    }
    let mut out = Vec::new();
    let mut stack: Vec<(usize, Vec<(usize, usize)>)> = vec![(0, Vec::new())];
    while let Some((pos, path)) = stack.pop() {
        if pos == n {
            let mut f = vec![0.0; layout.len()];
            let mut output = Vec::new();
            for &(start, k) in &path {
                let (len, target, scores, pp) = &options[start][k];
                for (slot, s) in scores.iter().enumerate() {
                    f[slot] += s.ln();
                }
                f[layout.word_penalty()] += target.len() as f64;
                f[layout.phrase_penalty()] += pp;
                let src = &source[start..start + len];
                let (d, i, de, s) = oracle_edits(src, target);
                f[layout.levenshtein_word()] += d as f64;
                f[layout.word_ops()] += i as f64;
                f[layout.word_ops() + 1] += de as f64;
                f[layout.word_ops() + 2] += s as f64;
                let sc: Vec<char> = src.join(" ").chars().collect();
                let tc: Vec<char> = target.join(" ").chars().collect();
                let (_, i, de, s) = oracle_edits(&sc, &tc);
                f[layout.char_ops()] += i as f64;
                f[layout.char_ops() + 1] += de as f64;
                f[layout.char_ops() + 2] += s as f64;
                output.extend(target.iter().cloned());
            }
            let sent = Sentence::new(output.clone()).unwrap();
            for (k, lm) in lms.iter().enumerate() {
                f[layout.lm(k)] = lm.score(&sent) * std::f64::consts::LN_10;
            }
            if let (Some((lm, map)), Some(slot)) = (class_lm, layout.class_lm()) {
                f[slot] = lm.score(&map.map_sentence(&sent)) * std::f64::consts::LN_10;
            }
            out.push(Derivation { output, features: f });
            continue;
        }
        for (k, opt) in options[pos].iter().enumerate() {
            let mut p = path.clone();
            p.push((pos, k));
            stack.push((pos + opt.0, p));
        }
    }
    out
}

/// Random phrase table over a small vocabulary, with phrases up to three
/// tokens on each side.
pub fn random_table(rng: &mut ChaCha8Rng, vocab: &[&str], entries: usize) -> PhraseTable {
    let mut table = PhraseTable::new();
    let phrase = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.gen_range(1..=3);
        (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].to_owned()).collect()
    };
    for _ in 0..entries {
        let source = phrase(rng);
        let target = phrase(rng);
        if table.get(&source, &target).is_some() {
            continue;
        }
        let mut p = || rng.gen_range(0.01..=1.0);
        table.push(PhraseTableEntry {
            source,
            target,
            phi_fwd: p(),
            lex_fwd: p(),
            phi_bwd: p(),
            lex_bwd: p(),
        });
    }
    table
}

pub fn random_sentence(rng: &mut ChaCha8Rng, vocab: &[&str], min: usize, max: usize) -> Sentence {
    let len = rng.gen_range(min..=max);
    Sentence::from_line(
        &(0..len)
            .map(|_| vocab[rng.gen_range(0..vocab.len())])
            .collect::<Vec<_>>()
            .join(" "),
    )
}

pub fn random_lm(rng: &mut ChaCha8Rng, vocab: &[&str], order: usize) -> NGramLanguageModel {
    let corpus: Vec<Sentence> = (0..40).map(|_| random_sentence(rng, vocab, 1, 8)).collect();
    lm_on(&corpus, order)
}

pub fn lm_on(corpus: &[Sentence], order: usize) -> NGramLanguageModel {
    let cfg = LmConfig {
        order,
        unk_from_singletons: false,
        fallback: DiscountFallback::Fixed([0.5, 1.0, 1.5]),
    };
    train_lm(corpus, &cfg).unwrap().0
}

/// Every minimal-cost alignment path between `src` and `hyp`, as steps
/// `(di, dj, is_match)`.
fn min_paths(src: &[String], hyp: &[String]) -> Vec<Vec<(usize, usize, bool)>> {
    fn lev(a: &[String], b: &[String]) -> usize {
        oracle_edits(a, b).0
    }
    let total = lev(src, hyp);
    let mut out = Vec::new();
    fn walk(
        src: &[String],
        hyp: &[String],
        i: usize,
        j: usize,
        cost: usize,
        total: usize,
        path: &mut Vec<(usize, usize, bool)>,
        out: &mut Vec<Vec<(usize, usize, bool)>>,
    ) {
        if cost + lev(&src[i..], &hyp[j..]) != total {
            return;
        }
        if i == src.len() && j == hyp.len() {
            out.push(path.clone());
            return;
        }
        let mut steps = Vec::new();
        if i < src.len() && j < hyp.len() {
            steps.push((1, 1, src[i] == hyp[j]));
        }
        if i < src.len() {
            steps.push((1, 0, false));
        }
        if j < hyp.len() {
            steps.push((0, 1, false));
        }
        for (di, dj, same) in steps {
            path.push((di, dj, same));
            walk(src, hyp, i + di, j + dj, cost + usize::from(!same), total, path, out);
            path.pop();
        }
    }
    walk(src, hyp, 0, 0, 0, total, &mut Vec::new(), &mut out);
    out
}

/// Largest number of distinct gold edits in any decomposition of a
/// minimal-cost path into edits, with the same merge rules as the scorer,
/// and the fewest edits achieving it.
pub fn oracle_max_overlap(src: &[String], hyp: &[String], gold: &[Edit], max_unchanged: usize) -> (usize, usize) {
    use std::collections::BTreeSet;
    let mut best = (0usize, usize::MAX);
    for path in min_paths(src, hyp) {
        // prefix positions
        let mut pos = vec![(0usize, 0usize)];
        for &(di, dj, _) in &path {
            let (i, j) = *pos.last().unwrap();
            pos.push((i + di, j + dj));
        }
        fn rec(
            k: usize,
            path: &[(usize, usize, bool)],
            pos: &[(usize, usize)],
            src: &[String],
            hyp: &[String],
            gold: &[Edit],
            max_unchanged: usize,
            chosen: &mut Vec<Edit>,
            best: &mut (usize, usize),
        ) {
            if k == path.len() {
                let set: BTreeSet<&Edit> = chosen.iter().collect();
                let hits = set.iter().filter(|e| gold.contains(e)).count();
                let cand = (hits, chosen.len());
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    *best = cand;
                }
                return;
            }
            if path[k].2 {
                rec(k + 1, path, pos, src, hyp, gold, max_unchanged, chosen, best);
            }
            for l in k + 1..=path.len() {
                let seg = &path[k..l];
                let matches = seg.iter().filter(|s| s.2).count();
                if matches == seg.len() {
                    continue;
                }
                let (i, j) = pos[k];
                let (ti, tj) = pos[l];
                let e = Edit {
                    start: i,
                    end: ti,
                    replacement: hyp[j..tj].to_vec(),
                };
                if matches > 0 && !(gold.contains(&e) && matches <= max_unchanged && !e.is_noop(src)) {
                    continue;
                }
                chosen.push(e);
                rec(l, path, pos, src, hyp, gold, max_unchanged, chosen, best);
                chosen.pop();
            }
        }
        rec(0, &path, &pos, src, hyp, gold, max_unchanged, &mut Vec::new(), &mut best);
    }
    if best.1 == usize::MAX {
        best.1 = 0;
    }
    best
}

/// Random source of up to `max_len` tokens, random gold edits over it, and
/// a hypothesis applying some of them plus occasional noise.
pub fn random_m2_fixture(rng: &mut ChaCha8Rng, max_len: usize) -> (Vec<String>, Vec<String>, Vec<Edit>) {
    const V: &[&str] = &["a", "b", "c", "d"];
    let pick = |rng: &mut ChaCha8Rng, k: usize| -> Vec<String> { (0..k).map(|_| V[rng.gen_range(0..V.len())].to_owned()).collect() };
    let n = rng.gen_range(0..=max_len);
    let src = pick(rng, n);
    let mut gold = Vec::new();
    let mut pos = 0;
    while pos <= n {
        if rng.gen_bool(0.4) {
            let len = rng.gen_range(0..=2.min(n - pos));
            let k = rng.gen_range(0..=2);
            let e = Edit {
                start: pos,
                end: pos + len,
                replacement: pick(rng, k),
            };
            if !e.is_noop(&src) {
                gold.push(e);
            }
            pos += len.max(1);
        } else {
            pos += 1;
        }
    }
    let applied: Vec<Edit> = gold.iter().filter(|_| rng.gen_bool(0.6)).cloned().collect();
    let mut hyp = apply_edits(&src, &applied);
    if rng.gen_bool(0.3) && !hyp.is_empty() {
        let at = rng.gen_range(0..hyp.len());
        hyp[at] = V[rng.gen_range(0..V.len())].to_owned();
    }
    (src, hyp, gold)
}

/// Plain GLEU for single-reference corpora, counted from n-gram lists.
pub fn oracle_gleu(corpus: &[(Vec<String>, Vec<String>, Vec<String>)], max_n: usize) -> f64 {
    fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
        if t.len() < n {
            return Vec::new();
        }
        (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
    }
    fn take_matches(h: &[Vec<String>], pool: &mut Vec<Vec<String>>) -> usize {
        let mut hits = 0;
        for g in h {
            if let Some(p) = pool.iter().position(|x| x == g) {
                pool.remove(p);
                hits += 1;
            }
        }
        hits
    }
    let (mut c, mut r) = (0.0, 0.0);
    let mut num = vec![0.0; max_n];
    let mut den = vec![0.0; max_n];
    for (s, h, refr) in corpus {
        c += h.len() as f64;
        r += refr.len() as f64;
        for n in 1..=max_n {
            let hg = grams(h, n);
            let mut rpool = grams(refr, n);
            let with_ref = take_matches(&hg, &mut rpool);
            // source n-grams left after removing one copy per reference n-gram
            let mut spool = grams(s, n);
            for g in grams(refr, n) {
                if let Some(p) = spool.iter().position(|x| *x == g) {
                    spool.remove(p);
                }
            }
            let with_src = take_matches(&hg, &mut spool);
            num[n - 1] += (with_ref as f64 - with_src as f64).max(0.0);
            den[n - 1] += hg.len() as f64;
        }
    }
    if c == 0.0 || num.iter().chain(&den).any(|&x| x == 0.0) {
        return 0.0;
    }
    let lp: f64 = num.iter().zip(&den).map(|(a, b)| (a / b).ln()).sum::<f64>() / max_n as f64;
    let bp = if c < r { 1.0 - r / c } else { 0.0 };
    (bp + lp).exp()
}

/// Random M² pools: `sentences` lists of up to `max_hyps` hypotheses with
/// `dim` features in [-1, 1] and small integer TP/FP/FN counts.
pub fn random_pool(rng: &mut ChaCha8Rng, sentences: usize, max_hyps: usize, dim: usize) -> Vec<Vec<Hypothesis>> {
    (0..sentences)
        .map(|_| {
            let k = rng.gen_range(1..=max_hyps);
            (0..k)
                .map(|_| Hypothesis {
                    features: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    stats: SufficientStats(vec![
                        rng.gen_range(0..3) as f64,
                        rng.gen_range(0..3) as f64,
                        rng.gen_range(0..3) as f64,
                    ]),
                })
                .collect()
        })
        .collect()
}

/// Argmax hypothesis per sentence at `base + x * dir`, ties to the lowest
/// index, and the corpus F0.5 of that selection.
pub fn grid_select(pool: &[Vec<Hypothesis>], base: &[f64], dir: &[f64], x: f64) -> (Vec<usize>, f64) {
    let w: Vec<f64> = base.iter().zip(dir).map(|(b, d)| b + x * d).collect();
    let mut picks = Vec::new();
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for hyps in pool {
        let mut best = 0;
        let mut best_s = f64::NEG_INFINITY;
        for (k, h) in hyps.iter().enumerate() {
            let s: f64 = h.features.iter().zip(&w).map(|(a, b)| a * b).sum();
            if s > best_s {
                best_s = s;
                best = k;
            }
        }
        picks.push(best);
        tp += hyps[best].stats.0[0];
        fp += hyps[best].stats.0[1];
        fn_ += hyps[best].stats.0[2];
    }
    let p = if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) };
    let r = if tp + fn_ == 0.0 { 1.0 } else { tp / (tp + fn_) };
    let f = if 0.25 * p + r == 0.0 { 0.0 } else { 1.25 * p * r / (0.25 * p + r) };
    (picks, f)
}

/// Unrestricted Damerau-Levenshtein distance (Lowrance-Wagner).
pub fn damerau(a: &[char], b: &[char]) -> usize {
    let (n, m) = (a.len(), b.len());
    let inf = n + m;
    let mut d = vec![vec![0usize; m + 2]; n + 2];
    d[0][0] = inf;
    for i in 0..=n {
        d[i + 1][0] = inf;
        d[i + 1][1] = i;
    }
    for j in 0..=m {
        d[0][j + 1] = inf;
        d[1][j + 1] = j;
    }
    let mut last_row: HashMap<char, usize> = HashMap::new();
    for i in 1..=n {
        let mut last_col = 0;
        for j in 1..=m {
            let i1 = *last_row.get(&b[j - 1]).unwrap_or(&0);
            let j1 = last_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_col = j;
                0
            } else {
                1
            };
            d[i + 1][j + 1] = (d[i][j] + cost)
                .min(d[i + 1][j] + 1)
                .min(d[i][j + 1] + 1)
                .min(d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1));
        }
        last_row.insert(a[i - 1], i);
    }
    d[n + 1][m + 1]
}

pub fn dist(a: &str, b: &str) -> usize {
    damerau(&a.chars().collect::<Vec<_>>(), &b.chars().collect::<Vec<_>>())
}

pub fn random_word(r: &mut ChaCha8Rng, alphabet: &[char]) -> String {
    let len = r.gen_range(2..=7);
    (0..len).map(|_| alphabet[r.gen_range(0..alphabet.len())]).collect()
}

pub fn mutate(r: &mut ChaCha8Rng, w: &str, alphabet: &[char]) -> String {
    let mut cs: Vec<char> = w.chars().collect();
    for _ in 0..r.gen_range(1..=3) {
        let i = r.gen_range(0..=cs.len());
        match r.gen_range(0..4) {
            0 if i < cs.len() && cs.len() > 2 => {
                cs.remove(i);
            }
            1 if i + 1 < cs.len() => cs.swap(i, i + 1),
            2 if i < cs.len() => cs[i] = alphabet[r.gen_range(0..alphabet.len())],
            _ => cs.insert(i, alphabet[r.gen_range(0..alphabet.len())]),
        }
    }
    cs.into_iter().collect()
}

pub fn random_list(r: &mut ChaCha8Rng, size: usize, alphabet: &[char]) -> WordList {
    let mut counts = HashMap::new();
    while counts.len() < size {
        counts.insert(random_word(r, alphabet), r.gen_range(6..60u64));
    }
    WordList::from_counts(counts)
}

pub fn oracle_choice(query: &str, list: &WordList) -> Option<String> {
    let scored: Vec<(usize, u64, &str)> = list
        .words()
        .map(|(w, c)| (dist(query, w), c, w))
        .filter(|(d, _, _)| (1..=2).contains(d))
        .collect();
    let best_d = scored.iter().map(|s| s.0).min()?;
    scored
        .iter()
        .filter(|s| s.0 == best_d)
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(a.2)))
        .map(|s| s.2.to_owned())
}

const TINY_CONFIG: &str = r#"
seed = 5

[data]
source = "source.txt"
target = "target.txt"
tuning = "tune.m2"
dev = "dev.m2"

[preprocess]
tokenize = false
bpe_operations = 0

[embeddings]
dim = 24
epochs = 6
window = 3

[mapping]
patience = 3
max_iterations = 30

[induction]
neighbor_limit = 10

[lm]
order = 3

[class_lm]
order = 4
classes = 12

[decoder]
beam = 10
options_per_phrase = 5

[tuning]
n_best = 10
outer_iterations = 2
random_restarts = 2

[refinement]
iterations = 2
synthetic_beam = 5
max_phrase_len = 3

[spellcheck]
min_frequency = 2
"#;

/// Writes a 400-sentence toy corpus and a fast configuration into `dir`.
pub fn setup_tiny(dir: &Path, mode: &str) -> PipelineConfig {
    let toy = make_toy_corpus(&ToyConfig {
        sentences: 400,
        tuning: 40,
        dev: 40,
        ..ToyConfig::default()
    })
    .unwrap();
    toy.write(dir).unwrap();
    let text = TINY_CONFIG.replace("[refinement]\n", &format!("[refinement]\nmode = \"{mode}\"\n"));
    fs::write(dir.join("pipeline.toml"), text).unwrap();
    PipelineConfig::load(&dir.join("pipeline.toml")).unwrap()
}
