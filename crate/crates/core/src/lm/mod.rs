//! Backoff n-gram language models: interpolated modified Kneser-Ney
//! estimation, ARPA I/O, incremental scoring, and word-class models.

mod classes;
mod train;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

pub use self::classes::{induce_classes, train_class_lm, KMeansConfig, WordClassMap};
pub use self::train::{train_lm, DiscountFallback, LmConfig, Smoothing};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::textio;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Log10 probability stored for tokens that can never be predicted.
const NEVER: f64 = -99.0;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    logp: f64,
    backoff: f64,
}

/// N-gram model with log10 probabilities and backoff weights.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramLanguageModel {
    order: usize,
    vocab: Vec<String>,
    ids: HashMap<String, u32>,
    bos: u32,
    eos: u32,
    unk: u32,
    /// `tables[n - 1]` holds the n-grams.
    tables: Vec<HashMap<Box<[u32]>, Entry>>,
}

/// Decoder-facing LM state: the longest suffix of the history that can
/// still influence future probabilities.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LmState(Vec<u32>);

impl LmState {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl NGramLanguageModel {
    fn with_vocab(order: usize, vocab: Vec<String>) -> Self {
        let ids: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        NGramLanguageModel {
            order,
            bos: ids[BOS],
            eos: ids[EOS],
            unk: ids[UNK],
            ids,
            vocab,
            tables: vec![HashMap::new(); order],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary including the sentence markers and the unknown token.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Number of stored n-grams per order.
    pub fn counts(&self) -> Vec<usize> {
        self.tables.iter().map(HashMap::len).collect()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(self.unk)
    }

    /// State after the begin-of-sentence marker.
    pub fn begin_state(&self) -> LmState {
        LmState(vec![self.bos])
    }

    /// State with no history.
    pub fn null_state(&self) -> LmState {
        LmState(Vec::new())
    }

    fn entry(&self, ngram: &[u32]) -> Option<&Entry> {
        self.tables.get(ngram.len().checked_sub(1)?)?.get(ngram)
    }

    /// Log10 probability of `word` after `history` (oldest first), by the
    /// backoff chain.
    fn logp_ids(&self, history: &[u32], word: u32) -> f64 {
        let max_ctx = history.len().min(self.order - 1);
        let mut ngram: Vec<u32> = Vec::with_capacity(max_ctx + 1);
        let mut backoff = 0.0;
        for ctx_len in (0..=max_ctx).rev() {
            ngram.clear();
            ngram.extend_from_slice(&history[history.len() - ctx_len..]);
            ngram.push(word);
            if let Some(e) = self.entry(&ngram) {
                return e.logp + backoff;
            }
            if ctx_len > 0 {
                if let Some(ctx) = self.entry(&ngram[..ctx_len]) {
                    backoff += ctx.backoff;
                }
            }
        }
        // a model without the unknown token in its unigrams
        NEVER + backoff
    }

    fn minimal_state(&self, mut history: Vec<u32>) -> LmState {
        let keep = history.len().min(self.order - 1);
        history.drain(..history.len() - keep);
        while !history.is_empty() && self.entry(&history).is_none() {
            history.remove(0);
        }
        LmState(history)
    }

    /// Scores one token and returns the successor state.
    pub fn score_state(&self, state: &LmState, token: &str) -> (f64, LmState) {
        self.score_id(state, self.id(token))
    }

    pub fn score_id(&self, state: &LmState, word: u32) -> (f64, LmState) {
        let logp = self.logp_ids(&state.0, word);
        let mut next = state.0.clone();
        next.push(word);
        (logp, self.minimal_state(next))
    }

    /// Log10 probability of the end-of-sentence marker in `state`.
    pub fn score_end(&self, state: &LmState) -> f64 {
        self.logp_ids(&state.0, self.eos)
    }

    /// Log10 probability of `word` given `context` tokens (oldest first).
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        let ids: Vec<u32> = context.iter().map(|t| self.id(t)).collect();
        self.logp_ids(&ids, self.id(word))
    }

    /// Log10 probability of a whole sentence, including the end marker.
    pub fn score(&self, sentence: &Sentence) -> f64 {
        let mut state = self.begin_state();
        let mut total = 0.0;
        for t in sentence.tokens() {
            let (p, next) = self.score_state(&state, t);
            total += p;
            state = next;
        }
        total + self.score_end(&state)
    }

    /// `10^(−Σ log10 p / N)` where N counts tokens plus one end marker per
    /// sentence.
    pub fn perplexity<'a, I>(&self, corpus: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut total = 0.0;
        let mut events = 0usize;
        for s in corpus {
            total += self.score(s);
            events += s.len() + 1;
        }
        if events == 0 {
            return Err(Error::InsufficientData(
                "perplexity of an empty corpus".into(),
            ));
        }
        Ok(10f64.powf(-total / events as f64))
    }

    /// Tokens that can be predicted: the vocabulary without `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .iter()
            .filter(|w| w.as_str() != BOS)
            .map(String::as_str)
    }

    pub fn write_arpa<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "\\data\\")?;
        for (n, t) in self.tables.iter().enumerate() {
            writeln!(w, "ngram {}={}", n + 1, t.len())?;
        }
        for (n, t) in self.tables.iter().enumerate() {
            writeln!(w)?;
            writeln!(w, "\\{}-grams:", n + 1)?;
            let mut keys: Vec<&Box<[u32]>> = t.keys().collect();
            keys.sort();
            for k in keys {
                let e = t[k];
                let words: Vec<&str> = k.iter().map(|&i| self.vocab[i as usize].as_str()).collect();
                write!(w, "{}\t{}", e.logp, words.join(" "))?;
                if n + 1 < self.order && e.backoff != 0.0 {
                    write!(w, "\t{}", e.backoff)?;
                }
                writeln!(w)?;
            }
        }
        writeln!(w)?;
        writeln!(w, "\\end\\")
    }

    pub fn read_arpa<R: BufRead>(r: R) -> Result<Self> {
        const FMT: &str = "ARPA";
        #[derive(PartialEq)]
        enum Section {
            Start,
            Data,
            Grams(usize),
            End,
        }
        let mut section = Section::Start;
        let mut declared: Vec<usize> = Vec::new();
        let mut grams: Vec<Vec<(Vec<String>, Entry)>> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed == "\\data\\" {
                if section != Section::Start {
                    return Err(Error::parse(FMT, lineno, "repeated \\data\\"));
                }
                section = Section::Data;
                continue;
            }
            if trimmed == "\\end\\" {
                section = Section::End;
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('\\') {
                let n: usize = rest
                    .strip_suffix("-grams:")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::parse(FMT, lineno, "bad section header"))?;
                if n == 0 || n > declared.len() || n != grams.len() + 1 {
                    return Err(Error::parse(FMT, lineno, "unexpected n-gram section"));
                }
                grams.push(Vec::new());
                section = Section::Grams(n);
                continue;
            }
            match section {
                Section::Start => {
                    return Err(Error::parse(FMT, lineno, "text before \\data\\"));
                }
                Section::End => return Err(Error::parse(FMT, lineno, "text after \\end\\")),
                Section::Data => {
                    let spec = trimmed
                        .strip_prefix("ngram ")
                        .ok_or_else(|| Error::parse(FMT, lineno, "expected `ngram N=count`"))?;
                    let (n, c) = spec
                        .split_once('=')
                        .ok_or_else(|| Error::parse(FMT, lineno, "expected `ngram N=count`"))?;
                    let n: usize = n
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(FMT, lineno, "bad order"))?;
                    let c: usize = c
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(FMT, lineno, "bad count"))?;
                    if n != declared.len() + 1 {
                        return Err(Error::parse(
                            FMT,
                            lineno,
                            "orders must be listed in sequence",
                        ));
                    }
                    declared.push(c);
                }
                Section::Grams(n) => {
                    let mut fields = trimmed.split_whitespace();
                    let logp: f64 = fields
                        .next()
                        .and_then(|f| f.parse().ok())
                        .filter(|p: &f64| p.is_finite() && *p <= 0.0)
                        .ok_or_else(|| Error::parse(FMT, lineno, "bad log probability"))?;
                    let rest: Vec<&str> = fields.collect();
                    let (words, backoff) = if rest.len() == n + 1 {
                        let bo: f64 = rest[n]
                            .parse()
                            .ok()
                            .filter(|b: &f64| b.is_finite())
                            .ok_or_else(|| Error::parse(FMT, lineno, "bad backoff"))?;
                        (&rest[..n], bo)
                    } else if rest.len() == n {
                        (&rest[..], 0.0)
                    } else {
                        return Err(Error::parse(FMT, lineno, format!("expected {n} words")));
                    };
                    grams[n - 1].push((
                        words.iter().map(|w| (*w).to_owned()).collect(),
                        Entry { logp, backoff },
                    ));
                }
            }
        }
        if section != Section::End {
            return Err(Error::parse(FMT, 0, "missing \\end\\"));
        }
        if declared.is_empty() || grams.len() != declared.len() {
            return Err(Error::parse(FMT, 0, "missing n-gram sections"));
        }
        for (n, (g, c)) in grams.iter().zip(&declared).enumerate() {
            if g.len() != *c {
                return Err(Error::parse(
                    FMT,
                    0,
                    format!("{}-grams: header says {c}, found {}", n + 1, g.len()),
                ));
            }
        }
        let mut vocab: Vec<String> = grams[0].iter().map(|(w, _)| w[0].clone()).collect();
        for special in [BOS, EOS, UNK] {
            if !vocab.iter().any(|w| w == special) {
                vocab.push(special.to_owned());
            }
        }
        let mut model = Self::with_vocab(declared.len(), vocab);
        for (n, list) in grams.into_iter().enumerate() {
            for (words, e) in list {
                let mut key = Vec::with_capacity(words.len());
                for w in &words {
                    match model.ids.get(w) {
                        Some(&id) => key.push(id),
                        None => {
                            return Err(Error::parse(
                                FMT,
                                0,
                                format!("{}-gram uses word {w:?} missing from unigrams", n + 1),
                            ))
                        }
                    }
                }
                model.tables[n].insert(key.into_boxed_slice(), e);
            }
        }
        let unk = model.unk;
        model.tables[0].entry(Box::new([unk])).or_insert(Entry {
            logp: -100.0,
            backoff: 0.0,
        });
        Ok(model)
    }

    pub fn read_arpa_path(path: &Path) -> Result<Self> {
        Self::read_arpa(textio::open_read(path)?)
    }

    pub fn write_arpa_path(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, |w| self.write_arpa(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIFORM: &str = "\\data\\\nngram 1=5\n\n\\1-grams:\n-99\t<s>\n-0.6020599913279624\ta\n-0.6020599913279624\tb\n-0.6020599913279624\t</s>\n-0.6020599913279624\t<unk>\n\n\\end\\\n";

    #[test]
    fn uniform_model_perplexity_equals_vocabulary_size() {
        let lm = NGramLanguageModel::read_arpa(UNIFORM.as_bytes()).unwrap();
        let corpus = [Sentence::from_line("a b b a"), Sentence::from_line("b")];
        let ppl = lm.perplexity(&corpus).unwrap();
        assert!((ppl - 4.0).abs() < 1e-9, "{ppl}");
    }

    #[test]
    fn empty_sentences_score_end_markers_only() {
        let lm = NGramLanguageModel::read_arpa(UNIFORM.as_bytes()).unwrap();
        let ppl = lm.perplexity(&[Sentence::default()]).unwrap();
        assert!(ppl.is_finite());
        assert!((ppl - 4.0).abs() < 1e-9);
    }

    #[test]
    fn hand_built_bigram_backoff() {
        let arpa = "\\data\\\nngram 1=4\nngram 2=2\n\n\\1-grams:\n-1.0\t<s>\t-0.5\n-0.3\ta\t-0.2\n-0.6\t</s>\n-2.0\t<unk>\n\n\\2-grams:\n-0.1\t<s> a\n-0.4\ta </s>\n\n\\end\\\n";
        let lm = NGramLanguageModel::read_arpa(arpa.as_bytes()).unwrap();
        // p(a|<s>) stored; p(</s>|a) stored
        assert!((lm.score(&Sentence::from_line("a")) - (-0.1 - 0.4)).abs() < 1e-12);
        // p(a|a) = bo(a) + p(a); p(</s>|a) stored
        assert!(
            (lm.score(&Sentence::from_line("a a")) - (-0.1 + (-0.2 - 0.3) - 0.4)).abs() < 1e-12
        );
        // unknown word: bo(<s>) + p(<unk>), then p(</s>|<unk>) = p(</s>)
        assert!((lm.score(&Sentence::from_line("zz")) - (-0.5 - 2.0 - 0.6)).abs() < 1e-12);
    }

    #[test]
    fn malformed_arpa_is_rejected() {
        for bad in [
            "",
            "\\data\\\nngram 1=2\n\n\\1-grams:\n-1\ta\n\n\\end\\\n",
            "\\data\\\nngram 1=1\n\n\\1-grams:\nx\ta\n\n\\end\\\n",
            "\\data\\\nngram 1=1\n\n\\1-grams:\n-1\ta\n",
            "\\data\\\nngram 1=1\nngram 2=1\n\n\\1-grams:\n-1\ta\n\n\\2-grams:\n-1\ta b\n\n\\end\\\n",
        ] {
            assert!(NGramLanguageModel::read_arpa(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }
}
