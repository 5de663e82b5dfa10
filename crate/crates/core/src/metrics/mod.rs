//! GEC evaluation: M² max-match scoring, GLEU and per-type breakdowns.

mod gleu;
mod m2;
mod maxmatch;

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

pub use self::gleu::{gleu, gleu_from_stats, gleu_sentence_stats, GleuConfig, GleuStats};
pub use self::m2::{
    m2_score, per_type_report, read_m2, read_m2_path, sentence_m2_counts, write_m2, write_m2_path, M2Scored,
    M2Sentence, TypeReport,
};
pub use self::maxmatch::{extract_system_edits, MaxMatchConfig};

/// A span edit on a tokenized source: tokens `start..end` are replaced by
/// `replacement`. Insertions have `start == end`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
}

impl Edit {
    pub fn new(start: usize, end: usize, replacement: &[&str]) -> Self {
        Edit {
            start,
            end,
            replacement: replacement.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// True when applying the edit to `source` changes nothing.
    pub fn is_noop(&self, source: &[String]) -> bool {
        self.end <= source.len() && source[self.start..self.end] == self.replacement[..]
    }
}

/// A gold edit with its error type and annotator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditAnnotation {
    pub edit: Edit,
    pub kind: String,
    pub annotator: usize,
}

/// Applies non-overlapping edits to `source`. Edits may come in any order
/// except that insertions at one position apply in the order given.
pub fn apply_edits(source: &[String], edits: &[Edit]) -> Vec<String> {
    let mut sorted: Vec<&Edit> = edits.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    let mut out = Vec::with_capacity(source.len());
    let mut pos = 0;
    for e in sorted {
        if e.start < pos {
            continue;
        }
        out.extend_from_slice(&source[pos..e.start]);
        out.extend(e.replacement.iter().cloned());
        pos = e.end;
    }
    out.extend_from_slice(&source[pos.min(source.len())..]);
    out
}

/// True/false positive and false negative edit counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl Counts {
    /// Precision with 0/0 taken as 1.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Recall with 0/0 taken as 1.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_beta(&self, beta: f64) -> f64 {
        f_beta(self.precision(), self.recall(), beta)
    }

    pub fn f05(&self) -> f64 {
        self.f_beta(0.5)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// F_β from precision and recall; 0 when both are 0.
pub fn f_beta(p: f64, r: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * p + r;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / den
    }
}

/// Corpus-level M² result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f05: f64,
}

impl MetricReport {
    pub fn from_counts(c: Counts) -> Self {
        MetricReport {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            f05: c.f05(),
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}

impl fmt::Display for MetricReport {
    /// `TP FP FN P R F0.5`, the last three in percent with two decimals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "TP {} FP {} FN {} P {:.2} R {:.2} F0.5 {:.2}",
            self.tp,
            self.fp,
            self.fn_,
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f05
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_counts_score_one() {
        let r = MetricReport::from_counts(Counts::default());
        assert_eq!((r.precision, r.recall, r.f05), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_true_positives_scores_zero() {
        let c = Counts { tp: 0, fp: 3, fn_: 2 };
        assert_eq!(c.f05(), 0.0);
        let c = Counts { tp: 0, fp: 0, fn_: 2 };
        // nothing proposed: precision 1, recall 0
        assert_eq!((c.precision(), c.recall(), c.f05()), (1.0, 0.0, 0.0));
    }

    #[test]
    fn f05_weights_precision() {
        let c = Counts { tp: 1, fp: 0, fn_: 3 };
        // P = 1, R = 1/4: 1.25 * 0.25 / (0.25 + 0.25)
        assert!((c.f05() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn apply_edits_in_any_order() {
        let src: Vec<String> = "a b c".split(' ').map(String::from).collect();
        let out = apply_edits(&src, &[Edit::new(2, 3, &[]), Edit::new(0, 0, &["x"]), Edit::new(1, 2, &["y", "z"])]);
        assert_eq!(out.join(" "), "x a y z");
    }
}
