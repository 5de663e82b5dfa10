//! Word-list spell checker with candidates within two edits.
//!
//! An edit is an insertion, deletion, substitution or transposition of
//! adjacent characters, so distances are Damerau-Levenshtein distances.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::textio;

pub const DEFAULT_MIN_FREQUENCY: u64 = 5;

/// Lowercased words with corpus frequencies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordList {
    counts: HashMap<String, u64>,
    alphabet: Vec<char>,
}

impl WordList {
    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let alphabet: BTreeSet<char> = counts.keys().flat_map(|w| w.chars()).collect();
        WordList {
            counts,
            alphabet: alphabet.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        self.counts.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    /// `word<TAB>count` lines, most frequent first.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut entries: Vec<(&String, &u64)> = self.counts.iter().collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        for (word, count) in entries {
            writeln!(w, "{word}\t{count}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        const FMT: &str = "word list";
        let mut counts = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(FMT, i + 1, "expected `word<TAB>count`"))?;
            let count: u64 = count
                .trim()
                .parse()
                .map_err(|_| Error::parse(FMT, i + 1, "count is not a non-negative integer"))?;
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::parse(FMT, i + 1, "word is empty or contains whitespace"));
            }
            *counts.entry(word.to_lowercase()).or_insert(0) += count;
        }
        Ok(WordList::from_counts(counts))
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        Self::read(textio::open_read(path)?)
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, |w| self.write(w))
    }
}

/// Counts lowercased tokens and keeps those seen more than
/// `min_frequency` times.
pub fn build_wordlist<'a, I>(corpus: I, min_frequency: u64) -> WordList
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    for s in corpus {
        for t in s {
            *counts.entry(t.to_lowercase()).or_insert(0) += 1;
        }
    }
    counts.retain(|_, c| *c > min_frequency);
    WordList::from_counts(counts)
}

fn edits1(word: &[char], alphabet: &[char], out: &mut HashSet<String>) {
    let n = word.len();
    let build = |parts: &[&[char]]| -> String { parts.iter().flat_map(|p| p.iter()).collect() };
    for i in 0..n {
        out.insert(build(&[&word[..i], &word[i + 1..]]));
    }
    for i in 0..n.saturating_sub(1) {
        out.insert(build(&[&word[..i], &[word[i + 1], word[i]], &word[i + 2..]]));
    }
    for i in 0..n {
        for &c in alphabet {
            if c != word[i] {
                out.insert(build(&[&word[..i], &[c], &word[i + 1..]]));
            }
        }
    }
    for i in 0..=n {
        for &c in alphabet {
            out.insert(build(&[&word[..i], &[c], &word[i..]]));
        }
    }
}

/// List words within `max_distance` (at most 2) edits of `word`, with
/// their distance. `word` is matched as given (callers lowercase).
pub fn candidates(word: &str, list: &WordList, max_distance: usize) -> Vec<(String, usize)> {
    let chars: Vec<char> = word.chars().collect();
    let mut found: HashMap<String, usize> = HashMap::new();
    if list.contains(word) {
        found.insert(word.to_owned(), 0);
    }
    if max_distance == 0 {
        return found.into_iter().collect();
    }
    let mut one = HashSet::new();
    edits1(&chars, &list.alphabet, &mut one);
    one.remove(word);
    for e in &one {
        if list.contains(e) {
            found.entry(e.clone()).or_insert(1);
        }
    }
    if max_distance >= 2 {
        let mut two = HashSet::new();
        for e in &one {
            let ec: Vec<char> = e.chars().collect();
            edits1(&ec, &list.alphabet, &mut two);
        }
        for e in two {
            if list.contains(&e) && !found.contains_key(&e) {
                found.insert(e, 2);
            }
        }
    }
    let mut out: Vec<(String, usize)> = found.into_iter().collect();
    out.sort();
    out
}

fn exempt(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_none() || chars.next().is_none() || token.chars().any(|c| !c.is_alphabetic())
}

fn reapply_case(original: &str, fixed: &str) -> String {
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return fixed.to_uppercase();
    }
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut cs = fixed.chars();
        return match cs.next() {
            Some(first) => first.to_uppercase().chain(cs).collect(),
            None => String::new(),
        };
    }
    fixed.to_owned()
}

/// Corrects one token. In-list words, tokens with digits or punctuation
/// and single characters are left alone. Otherwise the most frequent list
/// word at distance 1 is used, else at distance 2 (ties: lexicographic);
/// the original casing pattern is reapplied.
pub fn correct_token(token: &str, list: &WordList) -> String {
    if exempt(token) {
        return token.to_owned();
    }
    let lower = token.to_lowercase();
    if list.contains(&lower) {
        return token.to_owned();
    }
    let cands = candidates(&lower, list, 2);
    let best = [1, 2].into_iter().find_map(|d| {
        cands
            .iter()
            .filter(|(_, dist)| *dist == d)
            .max_by(|a, b| {
                let (ca, cb) = (list.count(&a.0).unwrap_or(0), list.count(&b.0).unwrap_or(0));
                ca.cmp(&cb).then(b.0.cmp(&a.0))
            })
    });
    match best {
        Some((w, _)) => reapply_case(token, w),
        None => token.to_owned(),
    }
}

/// Token-by-token correction; the length never changes.
pub fn correct_sentence(sentence: &Sentence, list: &WordList) -> Sentence {
    Sentence::new(sentence.iter().map(|t| correct_token(t, list)).collect())
        .expect("corrections are list words or the original tokens")
}

pub fn correct_corpus(sentences: &[Sentence], list: &WordList) -> Vec<Sentence> {
    sentences.par_iter().map(|s| correct_sentence(s, list)).collect()
}
