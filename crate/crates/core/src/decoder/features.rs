use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::{Add, AddAssign};
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio;

pub const LOG_PHI_FWD: usize = 0;
pub const LOG_LEX_FWD: usize = 1;
pub const LOG_PHI_BWD: usize = 2;
pub const LOG_LEX_BWD: usize = 3;

/// Which features a decoder configuration uses and where they live in a
/// [`FeatureVector`].
///
/// Order: four translation scores, one feature per surface LM, the class
/// LM if present, word and phrase penalties, word-level Levenshtein
/// distance, then word and character insertion/deletion/substitution
/// counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    surface_lms: usize,
    class_lm: bool,
    names: Vec<String>,
}

impl FeatureLayout {
    pub fn new(surface_lms: usize, class_lm: bool) -> Self {
        let mut names: Vec<String> = ["log_phi_fwd", "log_lex_fwd", "log_phi_bwd", "log_lex_bwd"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.extend((0..surface_lms).map(|i| format!("lm_{i}")));
        if class_lm {
            names.push("lm_class".into());
        }
        for n in [
            "word_penalty",
            "phrase_penalty",
            "levenshtein_word",
            "word_ins",
            "word_del",
            "word_sub",
            "char_ins",
            "char_del",
            "char_sub",
        ] {
            names.push(n.into());
        }
        FeatureLayout {
            surface_lms,
            class_lm,
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn surface_lms(&self) -> usize {
        self.surface_lms
    }

    pub fn has_class_lm(&self) -> bool {
        self.class_lm
    }

    pub fn lm(&self, i: usize) -> usize {
        debug_assert!(i < self.surface_lms);
        4 + i
    }

    pub fn class_lm(&self) -> Option<usize> {
        self.class_lm.then_some(4 + self.surface_lms)
    }

    fn tail(&self) -> usize {
        4 + self.surface_lms + self.class_lm as usize
    }

    pub fn word_penalty(&self) -> usize {
        self.tail()
    }

    pub fn phrase_penalty(&self) -> usize {
        self.tail() + 1
    }

    pub fn levenshtein_word(&self) -> usize {
        self.tail() + 2
    }

    /// First of the three word-level edit counts (ins, del, sub).
    pub fn word_ops(&self) -> usize {
        self.tail() + 3
    }

    /// First of the three character-level edit counts (ins, del, sub).
    pub fn char_ops(&self) -> usize {
        self.tail() + 6
    }

    pub fn zeros(&self) -> FeatureVector {
        FeatureVector(vec![0.0; self.len()])
    }

    /// Initial weights: 1 for translation and LM features, -1 for the
    /// penalties, 0 for edit features.
    pub fn default_weights(&self) -> Weights {
        let mut values = vec![0.0; self.len()];
        for v in values.iter_mut().take(self.tail()) {
            *v = 1.0;
        }
        values[self.word_penalty()] = -1.0;
        values[self.phrase_penalty()] = -1.0;
        Weights {
            names: self.names.clone(),
            values,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dot(&self, weights: &[f64]) -> f64 {
        debug_assert_eq!(self.0.len(), weights.len());
        self.0.iter().zip(weights).map(|(f, w)| f * w).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AddAssign<&FeatureVector> for FeatureVector {
    fn add_assign(&mut self, rhs: &FeatureVector) {
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

impl Add<&FeatureVector> for &FeatureVector {
    type Output = FeatureVector;

    fn add(self, rhs: &FeatureVector) -> FeatureVector {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

/// One weight per feature name.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl Weights {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature {name:?}")))?;
        self.values[i] = value;
        Ok(())
    }

    /// Reorders to `layout`. Every layout feature must be present; extra
    /// names are an error.
    pub fn aligned_to(&self, layout: &FeatureLayout) -> Result<Weights> {
        if self.names == layout.names() {
            return Ok(self.clone());
        }
        let by_name: HashMap<&str, f64> = self
            .names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
            .collect();
        if let Some(extra) = self.names.iter().find(|n| !layout.names().contains(n)) {
            return Err(Error::Mismatch(format!("weight for unknown feature {extra:?}")));
        }
        let values = layout
            .names()
            .iter()
            .map(|n| {
                by_name
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::Mismatch(format!("no weight for feature {n:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Weights {
            names: layout.names().to_vec(),
            values,
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (n, v) in self.names.iter().zip(&self.values) {
            writeln!(w, "{n}\t{v}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        const FMT: &str = "weights";
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (name, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(FMT, i + 1, "expected `name<TAB>value`"))?;
            let value: f64 = value
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(FMT, i + 1, "value is not a finite number"))?;
            if name.is_empty() || names.iter().any(|n| n == name) {
                return Err(Error::parse(FMT, i + 1, "empty or repeated feature name"));
            }
            names.push(name.to_owned());
            values.push(value);
        }
        Ok(Weights { names, values })
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        Self::read(textio::open_read(path)?)
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, |w| self.write(w))
    }
}
