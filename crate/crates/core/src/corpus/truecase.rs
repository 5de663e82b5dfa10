use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::Sentence;
use crate::error::{Error, Result};

/// Most frequent surface casing per lowercased token, learned from
/// non-sentence-initial positions only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruecaseModel {
    best_casing: HashMap<String, String>,
    /// Per lowercased form: observed casings in first-seen order.
    counts: HashMap<String, Vec<(String, u64)>>,
}

pub fn train_truecaser<'a, I>(corpus: I) -> Result<TruecaseModel>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut counts: HashMap<String, Vec<(String, u64)>> = HashMap::new();
    let mut n_sentences = 0usize;
    for sentence in corpus {
        n_sentences += 1;
        for token in sentence.tokens().iter().skip(1) {
            let group = counts.entry(token.to_lowercase()).or_default();
            match group.iter_mut().find(|(s, _)| s == token) {
                Some((_, c)) => *c += 1,
                None => group.push((token.clone(), 1)),
            }
        }
    }
    if n_sentences == 0 {
        return Err(Error::InsufficientData(
            "truecaser needs at least one sentence".into(),
        ));
    }
    Ok(TruecaseModel::from_counts(counts))
}

impl TruecaseModel {
    fn from_counts(counts: HashMap<String, Vec<(String, u64)>>) -> Self {
        let best_casing = counts
            .iter()
            .filter_map(|(key, group)| {
                // max_by_key keeps the last maximum; scan manually to keep the first
                let mut best: Option<&(String, u64)> = None;
                for entry in group {
                    if best.is_none_or(|b| entry.1 > b.1) {
                        best = Some(entry);
                    }
                }
                best.map(|(s, _)| (key.clone(), s.clone()))
            })
            .collect();
        TruecaseModel {
            best_casing,
            counts,
        }
    }

    pub fn best_casing(&self, lowercased: &str) -> Option<&str> {
        self.best_casing.get(lowercased).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.best_casing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best_casing.is_empty()
    }

    /// Replaces the sentence-initial token by its preferred casing.
    pub fn apply(&self, sentence: &Sentence) -> Sentence {
        let mut tokens = sentence.tokens().to_vec();
        if let Some(first) = tokens.first_mut() {
            if let Some(best) = self.best_casing.get(&first.to_lowercase()) {
                first.clone_from(best);
            }
        }
        Sentence::from_tokens_unchecked(tokens)
    }

    /// Writes `surface count` lines, groups sorted by key and casings by
    /// descending count (ties keep first-seen order).
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut keys: Vec<&String> = self.counts.keys().collect();
        keys.sort();
        for key in keys {
            let mut group = self.counts[key].clone();
            group.sort_by(|a, b| b.1.cmp(&a.1));
            for (surface, count) in group {
                writeln!(w, "{surface} {count}")?;
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`TruecaseModel::write`]. The first line of
    /// each lowercase group is taken as the best casing.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut counts: HashMap<String, Vec<(String, u64)>> = HashMap::new();
        let mut best_casing = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(surface), Some(count), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(
                    "truecase model",
                    i + 1,
                    "expected `surface count`",
                ));
            };
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse("truecase model", i + 1, "count is not an integer"))?;
            let key = surface.to_lowercase();
            best_casing
                .entry(key.clone())
                .or_insert_with(|| surface.to_owned());
            let group = counts.entry(key).or_default();
            match group.iter_mut().find(|(s, _)| s == surface) {
                Some((_, c)) => *c += count,
                None => group.push((surface.to_owned(), count)),
            }
        }
        Ok(TruecaseModel {
            best_casing,
            counts,
        })
    }
}

/// Uppercases the first alphabetic character of the first token.
pub fn detruecase(sentence: &Sentence) -> Sentence {
    let mut tokens = sentence.tokens().to_vec();
    if let Some(first) = tokens.first_mut() {
        if let Some((idx, c)) = first.char_indices().find(|(_, c)| c.is_alphabetic()) {
            let upper: String = c.to_uppercase().collect();
            first.replace_range(idx..idx + c.len_utf8(), &upper);
        }
    }
    Sentence::from_tokens_unchecked(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(line: &str) -> Sentence {
        Sentence::from_line(line)
    }

    #[test]
    fn sentence_initial_tokens_are_not_counted() {
        let m = train_truecaser(&[s("The cat"), s("the cat")]).unwrap();
        assert_eq!(m.best_casing("cat"), Some("cat"));
        assert_eq!(m.best_casing("the"), None);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn most_frequent_casing_wins() {
        let corpus = [
            s("I love my iPhone"),
            s("an iPhone"),
            s("the Iphone"),
            s("buy iPhone"),
        ];
        let m = train_truecaser(&corpus).unwrap();
        assert_eq!(m.best_casing("iphone"), Some("iPhone"));
    }

    #[test]
    fn ties_go_to_first_seen() {
        let m = train_truecaser(&[s("x Apple"), s("x apple")]).unwrap();
        assert_eq!(m.best_casing("apple"), Some("Apple"));
    }

    #[test]
    fn only_initial_tokens_gives_empty_model() {
        let m = train_truecaser(&[s("London")]).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let empty: [Sentence; 0] = [];
        assert!(matches!(
            train_truecaser(&empty),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn apply_and_detruecase() {
        let m = train_truecaser(&[s("x the")]).unwrap();
        assert_eq!(m.apply(&s("The cat")), s("the cat"));
        assert_eq!(TruecaseModel::default().apply(&s("Hello")), s("Hello"));
        assert_eq!(detruecase(&s("the cat")), s("The cat"));
        assert_eq!(detruecase(&s("\" hi")), s("\" hi"));
        assert_eq!(detruecase(&s("'s good")), s("'S good"));
    }

    #[test]
    fn file_round_trip() {
        let corpus = [s("a iPhone iPhone Iphone"), s("b Apple apple apple")];
        let m = train_truecaser(&corpus).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("apple 2\nApple 1\n"));
        let back = TruecaseModel::read(&buf[..]).unwrap();
        assert_eq!(back.best_casing, m.best_casing);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn malformed_file_names_line() {
        let err = TruecaseModel::read("a 1\nb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(TruecaseModel::read("a x\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn apply_is_idempotent(words in prop::collection::vec("[a-cA-C]{1,3}", 1..8)) {
            let corpus: Vec<Sentence> = words.chunks(3)
                .map(|c| Sentence::from_line(&c.join(" ")))
                .collect();
            let m = train_truecaser(&corpus).unwrap();
            for sent in &corpus {
                let once = m.apply(sent);
                prop_assert_eq!(m.apply(&once), once.clone());
                for (k, v) in &m.best_casing {
                    prop_assert_eq!(&v.to_lowercase(), k);
                }
            }
        }
    }
}
