//! Phrase tables: induction from cross-lingual embeddings and the text
//! file format shared with tables estimated from aligned data.

mod induce;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

pub use self::induce::{
    estimate_temperature, induce_table, lexical_weight, phrase_translation_probs, softmax,
    BackwardMode, InductionConfig, Temperature, WordTranslations, DEFAULT_EPSILON,
    DEFAULT_NEIGHBOR_LIMIT,
};

use crate::error::{Error, Result};
use crate::textio;

/// One source/target phrase pair with its four translation scores.
#[derive(Clone, Debug, PartialEq)]
pub struct PhraseTableEntry {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub phi_fwd: f64,
    pub lex_fwd: f64,
    pub phi_bwd: f64,
    pub lex_bwd: f64,
}

impl PhraseTableEntry {
    /// Scores in file order.
    pub fn scores(&self) -> [f64; 4] {
        [self.phi_fwd, self.lex_fwd, self.phi_bwd, self.lex_bwd]
    }
}

/// Entries grouped by source phrase. Iteration and serialization follow
/// insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhraseTable {
    entries: Vec<PhraseTableEntry>,
    by_source: HashMap<Vec<String>, Vec<usize>>,
    max_source_len: usize,
}

const FMT: &str = "phrase table";

/// Six significant digits, printed in the shortest form that reads back to
/// the rounded value.
pub(crate) fn format_score(x: f64) -> String {
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

impl PhraseTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = PhraseTableEntry>) -> Self {
        let mut t = Self::new();
        for e in entries {
            t.push(e);
        }
        t
    }

    pub fn push(&mut self, entry: PhraseTableEntry) {
        self.max_source_len = self.max_source_len.max(entry.source.len());
        self.by_source
            .entry(entry.source.clone())
            .or_default()
            .push(self.entries.len());
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PhraseTableEntry] {
        &self.entries
    }

    pub fn max_source_len(&self) -> usize {
        self.max_source_len
    }

    /// Target options for one source phrase.
    pub fn options<'a>(&'a self, source: &[String]) -> impl Iterator<Item = &'a PhraseTableEntry> {
        self.by_source
            .get(source)
            .into_iter()
            .flatten()
            .map(|&i| &self.entries[i])
    }

    pub fn sources(&self) -> usize {
        self.by_source.len()
    }

    pub fn get(&self, source: &[String], target: &[String]) -> Option<&PhraseTableEntry> {
        self.options(source).find(|e| e.target == target)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(
                w,
                "{} ||| {} ||| {} {} {} {}",
                e.source.join(" "),
                e.target.join(" "),
                format_score(e.phi_fwd),
                format_score(e.lex_fwd),
                format_score(e.phi_bwd),
                format_score(e.lex_bwd)
            )?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut table = Self::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    FMT,
                    lineno,
                    format!("expected 3 `|||`-separated fields, found {}", fields.len()),
                ));
            }
            let source: Vec<String> = fields[0].split_whitespace().map(str::to_owned).collect();
            let target: Vec<String> = fields[1].split_whitespace().map(str::to_owned).collect();
            if source.is_empty() || target.is_empty() {
                return Err(Error::parse(FMT, lineno, "empty phrase"));
            }
            let scores: Vec<f64> = fields[2]
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(FMT, lineno, "score is not a number"))?;
            if scores.len() != 4 {
                return Err(Error::parse(
                    FMT,
                    lineno,
                    format!("expected 4 scores, found {}", scores.len()),
                ));
            }
            if scores.iter().any(|s| !(*s > 0.0 && *s <= 1.0 + 1e-6)) {
                return Err(Error::parse(FMT, lineno, "scores must lie in (0, 1]"));
            }
            table.push(PhraseTableEntry {
                source,
                target,
                phi_fwd: scores[0],
                lex_fwd: scores[1],
                phi_bwd: scores[2],
                lex_bwd: scores[3],
            });
        }
        Ok(table)
    }

    /// Reads a table, transparently decompressing `.gz` files.
    pub fn read_path(path: &Path) -> Result<Self> {
        Self::read(textio::open_read(path)?)
    }

    /// Writes atomically; `.gz` paths are compressed.
    pub fn write_path(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, |w| self.write(w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn parses_line_in_documented_order() {
        let t = PhraseTable::read("a b ||| c ||| 0.5 0.4 0.3 0.2\n".as_bytes()).unwrap();
        let e = &t.entries()[0];
        assert_eq!(e.source, toks("a b"));
        assert_eq!(e.target, toks("c"));
        assert_eq!(e.scores(), [0.5, 0.4, 0.3, 0.2]);
        assert_eq!(t.options(&toks("a b")).count(), 1);
        assert_eq!(t.max_source_len(), 2);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        for bad in [
            "a ||| b ||| 0.5 0.4 0.3\n",
            "a ||| b\n",
            "a ||| b ||| 0.5 x 0.3 0.2\n",
            " ||| b ||| 0.5 0.4 0.3 0.2\n",
            "a ||| b ||| 0 0.4 0.3 0.2\n",
        ] {
            let text = format!("a ||| a ||| 1 1 1 1\n{bad}");
            let err = PhraseTable::read(text.as_bytes()).unwrap_err();
            assert!(matches!(err, Error::Parse { line: 2, .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_score(0.7310585786300049), "0.731059");
        assert_eq!(format_score(1.0), "1");
        assert_eq!(format_score(1.234567e-7), "0.000000123457");
    }

    #[test]
    fn round_trip_within_precision() {
        let t = PhraseTable::from_entries([
            PhraseTableEntry {
                source: toks("go"),
                target: toks("goes"),
                phi_fwd: 0.123456789,
                lex_fwd: 1.0,
                phi_bwd: 1e-3,
                lex_bwd: 0.5,
            },
            PhraseTableEntry {
                source: toks("go"),
                target: toks("went"),
                phi_fwd: 0.876543211,
                lex_fwd: 0.25,
                phi_bwd: 0.9999999,
                lex_bwd: 0.5,
            },
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.gz");
        t.write_path(&path).unwrap();
        let back = PhraseTable::read_path(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in t.entries().iter().zip(back.entries()) {
            assert_eq!((&a.source, &a.target), (&b.source, &b.target));
            for (x, y) in a.scores().iter().zip(b.scores()) {
                assert!((x - y).abs() <= 5e-6 * x.abs());
            }
        }
    }
}
