//! Monotone phrase-based decoding with a log-linear model.

mod edit;
mod features;
mod search;

use std::io::{BufRead, Write};

pub use self::edit::{char_edit_ops, edit_ops, EditOps};
pub use self::features::{
    FeatureLayout, FeatureVector, Weights, LOG_LEX_BWD, LOG_LEX_FWD, LOG_PHI_BWD, LOG_PHI_FWD,
};
pub use self::search::{ClassLm, Decoder, DecoderConfig, Translation};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// One n-best line: `id ||| tokens ||| name=value ... ||| score`.
pub fn write_nbest<W: Write>(
    mut w: W,
    layout: &FeatureLayout,
    id: usize,
    list: &[Translation],
) -> std::io::Result<()> {
    for t in list {
        let feats: Vec<String> = layout
            .names()
            .iter()
            .zip(t.features.values())
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        writeln!(w, "{id} ||| {} ||| {} ||| {}", t.tokens, feats.join(" "), t.score)?;
    }
    Ok(())
}

/// Reads an n-best file into per-sentence lists. Feature names must match
/// `layout` in order; ids must be non-decreasing.
pub fn read_nbest<R: BufRead>(r: R, layout: &FeatureLayout) -> Result<Vec<(usize, Vec<Translation>)>> {
    const FMT: &str = "n-best";
    let mut out: Vec<(usize, Vec<Translation>)> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(FMT, lineno, "expected 4 `|||`-separated fields"));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(FMT, lineno, "bad sentence id"))?;
        let mut values = Vec::with_capacity(layout.len());
        for (k, item) in fields[2].split_whitespace().enumerate() {
            let (name, v) = item
                .split_once('=')
                .ok_or_else(|| Error::parse(FMT, lineno, "expected name=value"))?;
            if layout.names().get(k).map(String::as_str) != Some(name) {
                return Err(Error::parse(FMT, lineno, format!("unexpected feature {name:?}")));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| Error::parse(FMT, lineno, "feature value is not a number"))?;
            values.push(v);
        }
        if values.len() != layout.len() {
            return Err(Error::parse(FMT, lineno, "wrong number of features"));
        }
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(FMT, lineno, "score is not a number"))?;
        let t = Translation {
            tokens: Sentence::from_line(fields[1]),
            features: FeatureVector(values),
            score,
        };
        match out.last_mut() {
            Some((last, list)) if *last == id => list.push(t),
            Some((last, _)) if *last > id => {
                return Err(Error::parse(FMT, lineno, "sentence ids must not decrease"))
            }
            _ => out.push((id, vec![t])),
        }
    }
    Ok(out)
}
