//! Word alignment of synthetic parallel data and relative-frequency phrase
//! tables estimated from the aligned corpus.

mod extract;
mod ibm2;
mod symmetrize;

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

pub use self::extract::{
    brute_force_phrases, estimate_refined_table, extract_phrases, table_from_alignments,
    PhraseSpan, DEFAULT_MAX_PHRASE_LEN,
};
pub use self::ibm2::{train_aligner, AlignerConfig, AlignmentModel};
pub use self::symmetrize::{grow_diag_final_and, train_symmetric, SymmetricAligner};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::textio;

/// `(source index, target index)` pairs.
pub type Links = BTreeSet<(usize, usize)>;

#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub source: Sentence,
    pub target: Sentence,
    pub links: Links,
}

impl AlignedPair {
    pub fn new(source: Sentence, target: Sentence, links: Links) -> Result<Self> {
        if let Some(&(i, j)) = links
            .iter()
            .find(|&&(i, j)| i >= source.len() || j >= target.len())
        {
            return Err(Error::InvalidArgument(format!(
                "link {i}-{j} outside a {}x{} pair",
                source.len(),
                target.len()
            )));
        }
        Ok(AlignedPair {
            source,
            target,
            links,
        })
    }
}

/// Pharaoh format: space-separated `i-j` links.
pub fn format_links(links: &Links) -> String {
    links
        .iter()
        .map(|(i, j)| format!("{i}-{j}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_links(line: &str) -> std::result::Result<Links, String> {
    line.split_whitespace()
        .map(|tok| {
            let (i, j) = tok
                .split_once('-')
                .ok_or_else(|| format!("link {tok:?} is not `i-j`"))?;
            let i = i
                .parse()
                .map_err(|_| format!("bad source index in {tok:?}"))?;
            let j = j
                .parse()
                .map_err(|_| format!("bad target index in {tok:?}"))?;
            Ok((i, j))
        })
        .collect()
}

pub fn write_alignments<W: Write>(pairs: &[AlignedPair], mut w: W) -> std::io::Result<()> {
    for p in pairs {
        writeln!(w, "{}", format_links(&p.links))?;
    }
    Ok(())
}

/// Reads one link line per sentence pair and checks indices against the
/// sentence lengths.
pub fn read_alignments<R: BufRead>(
    r: R,
    pairs: &[(Sentence, Sentence)],
) -> Result<Vec<AlignedPair>> {
    const FMT: &str = "alignment";
    let mut out = Vec::with_capacity(pairs.len());
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let (src, tgt) = pairs
            .get(i)
            .ok_or_else(|| Error::parse(FMT, i + 1, "more alignment lines than sentence pairs"))?;
        let links = parse_links(&line).map_err(|m| Error::parse(FMT, i + 1, m))?;
        let pair = AlignedPair::new(src.clone(), tgt.clone(), links)
            .map_err(|e| Error::parse(FMT, i + 1, e.to_string()))?;
        out.push(pair);
    }
    if out.len() != pairs.len() {
        return Err(Error::Mismatch(format!(
            "{} alignment lines for {} sentence pairs",
            out.len(),
            pairs.len()
        )));
    }
    Ok(out)
}

pub fn write_alignments_path(pairs: &[AlignedPair], path: &Path) -> Result<()> {
    textio::write_atomic(path, |w| write_alignments(pairs, w))
}

pub fn read_alignments_path(
    path: &Path,
    pairs: &[(Sentence, Sentence)],
) -> Result<Vec<AlignedPair>> {
    read_alignments(textio::open_read(path)?, pairs)
}
