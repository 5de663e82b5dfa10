//! Corpus ingestion and preprocessing.

mod bpe;
mod noise;
mod tokenize;
mod truecase;

use std::fmt;

pub use self::bpe::{debpe, learn_bpe, BpeModel, BPE_CONTINUATION, BPE_END_OF_WORD};
pub use self::noise::{
    synthesize_noise, synthesize_noise_one, NoiseConfig, DETERMINERS, PREPOSITIONS,
};
pub use self::tokenize::tokenize;
pub use self::truecase::{detruecase, train_truecaser, TruecaseModel};

use crate::error::{Error, Result};

/// A tokenized sentence. Tokens are never empty and never contain whitespace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::InvalidArgument(format!("token {i} is empty")));
            }
            if t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!(
                    "token {i} ({t:?}) contains whitespace"
                )));
            }
        }
        Ok(Sentence(tokens))
    }

    /// Splits an already tokenized line on whitespace.
    pub fn from_line(line: &str) -> Self {
        Sentence(line.split_whitespace().map(str::to_owned).collect())
    }

    /// Builds a sentence from tokens already known to satisfy the invariants.
    pub(crate) fn from_tokens_unchecked(tokens: Vec<String>) -> Self {
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        Sentence(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t)?;
        }
        Ok(())
    }
}

impl From<&str> for Sentence {
    fn from(line: &str) -> Self {
        Sentence::from_line(line)
    }
}

impl<'a> IntoIterator for &'a Sentence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Inclusive token-count bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LengthBounds {
    pub min: usize,
    pub max: usize,
}

impl LengthBounds {
    /// Bounds applied to synthetic sentence pairs during refinement.
    pub const PAIR: LengthBounds = LengthBounds { min: 3, max: 80 };
    /// Bounds applied to monolingual training corpora.
    pub const MONO: LengthBounds = LengthBounds { min: 1, max: 150 };

    pub fn contains(&self, len: usize) -> bool {
        self.min <= len && len <= self.max
    }
}

pub fn length_filter<I>(sentences: I, bounds: LengthBounds) -> impl Iterator<Item = Sentence>
where
    I: IntoIterator<Item = Sentence>,
{
    sentences
        .into_iter()
        .filter(move |s| bounds.contains(s.len()))
}

/// Keeps pairs whose both sides satisfy `bounds`.
pub fn length_filter_pairs<I>(
    pairs: I,
    bounds: LengthBounds,
) -> impl Iterator<Item = (Sentence, Sentence)>
where
    I: IntoIterator<Item = (Sentence, Sentence)>,
{
    pairs
        .into_iter()
        .filter(move |(a, b)| bounds.contains(a.len()) && bounds.contains(b.len()))
}
