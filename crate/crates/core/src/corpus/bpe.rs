//! Byte-pair encoding: greedy most-frequent-pair merge learning over
//! word-internal symbol sequences.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use super::Sentence;
use crate::error::{Error, Result};

/// Appended to every non-final subunit of a segmented word.
pub const BPE_CONTINUATION: &str = "@@";
/// Suffix of the last symbol of a word during learning and application.
pub const BPE_END_OF_WORD: &str = "</w>";

const VERSION_HEADER: &str = "#version: 0.2";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    n_operations: usize,
}

type Pair = (String, String);

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut s = c.to_string();
            if i + 1 == n {
                s.push_str(BPE_END_OF_WORD);
            }
            s
        })
        .collect()
}

/// Learns up to `n_operations` merges. Learning stops early once the most
/// frequent pair occurs fewer than twice. Ties go to the lexicographically
/// smallest pair.
pub fn learn_bpe<'a, I>(corpus: I, n_operations: usize) -> Result<BpeModel>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    if n_operations == 0 {
        return Err(Error::InvalidArgument("n_operations must be >= 1".into()));
    }
    let mut word_freq: HashMap<&str, u64> = HashMap::new();
    for s in corpus {
        for t in s.tokens() {
            *word_freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut words: Vec<(&str, u64)> = word_freq.into_iter().collect();
    words.sort_unstable();
    let mut vocab: Vec<(Vec<String>, u64)> = words
        .into_iter()
        .map(|(w, f)| (word_symbols(w), f))
        .collect();

    let mut pair_counts: HashMap<Pair, u64> = HashMap::new();
    let mut pair_words: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (wi, (symbols, freq)) in vocab.iter().enumerate() {
        for p in symbols.windows(2) {
            let key = (p[0].clone(), p[1].clone());
            *pair_counts.entry(key.clone()).or_default() += freq;
            pair_words.entry(key).or_default().insert(wi);
        }
    }

    let mut merges = Vec::new();
    while merges.len() < n_operations {
        let Some((best, count)) = pair_counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|(p, c)| (p.clone(), *c))
        else {
            break;
        };
        if count < 2 {
            break;
        }
        let merged = format!("{}{}", best.0, best.1);
        let mut affected: Vec<usize> = pair_words
            .remove(&best)
            .unwrap_or_default()
            .into_iter()
            .collect();
        affected.sort_unstable();
        for wi in affected {
            let (symbols, freq) = &mut vocab[wi];
            let freq = *freq;
            for p in symbols.windows(2) {
                let key = (p[0].clone(), p[1].clone());
                if let Some(c) = pair_counts.get_mut(&key) {
                    *c -= freq;
                }
            }
            *symbols = merge_pair(symbols, &best, &merged);
            for p in symbols.windows(2) {
                let key = (p[0].clone(), p[1].clone());
                *pair_counts.entry(key.clone()).or_default() += freq;
                pair_words.entry(key).or_default().insert(wi);
            }
        }
        pair_counts.remove(&best);
        merges.push(best);
    }
    Ok(BpeModel::from_merges(merges, n_operations))
}

fn merge_pair(symbols: &[String], pair: &Pair, merged: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            out.push(merged.to_owned());
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>, n_operations: usize) -> Self {
        let n_operations = n_operations.max(merges.len());
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, m) in merges.iter().enumerate() {
            ranks.entry(m.clone()).or_insert(i);
        }
        BpeModel {
            merges,
            ranks,
            n_operations,
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn n_operations(&self) -> usize {
        self.n_operations
    }

    /// Segments one word into subunits, without continuation markers.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols = word_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|p| {
                    self.ranks
                        .get(&(p[0].clone(), p[1].clone()))
                        .map(|&r| (r, p[0].clone(), p[1].clone()))
                })
                .min();
            let Some((_, a, b)) = best else { break };
            let merged = format!("{a}{b}");
            symbols = merge_pair(&symbols, &(a, b), &merged);
        }
        if let Some(last) = symbols.last_mut() {
            let trimmed = last.len() - BPE_END_OF_WORD.len();
            last.truncate(trimmed);
        }
        symbols.retain(|s| !s.is_empty());
        symbols
    }

    /// Segments every token; non-final subunits get the `@@` marker.
    pub fn apply(&self, sentence: &Sentence) -> Sentence {
        let mut out = Vec::with_capacity(sentence.len());
        for token in sentence.tokens() {
            let units = self.segment_word(token);
            let n = units.len();
            for (i, mut u) in units.into_iter().enumerate() {
                if i + 1 < n {
                    u.push_str(BPE_CONTINUATION);
                }
                out.push(u);
            }
        }
        Sentence::from_tokens_unchecked(out)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{VERSION_HEADER}")?;
        for (a, b) in &self.merges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut merges = Vec::new();
        let mut saw_header = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if !line.starts_with("#version") {
                    return Err(Error::parse("bpe model", 1, "missing #version header"));
                }
                saw_header = true;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_owned(), b.to_owned()))
                }
                _ => return Err(Error::parse("bpe model", i + 1, "expected `left right`")),
            }
        }
        if !saw_header {
            return Err(Error::parse("bpe model", 1, "empty file"));
        }
        let n = merges.len();
        Ok(BpeModel::from_merges(merges, n))
    }
}

/// Undoes [`BpeModel::apply`]: joins every `@@`-terminated unit with its successor.
pub fn debpe(sentence: &Sentence) -> Sentence {
    let mut out = Vec::with_capacity(sentence.len());
    let mut pending = String::new();
    for token in sentence.tokens() {
        match token.strip_suffix(BPE_CONTINUATION) {
            Some(prefix) => pending.push_str(prefix),
            None => {
                pending.push_str(token);
                out.push(std::mem::take(&mut pending));
            }
        }
    }
    if !pending.is_empty() {
        out.push(pending);
    }
    Sentence::from_tokens_unchecked(out)
}
