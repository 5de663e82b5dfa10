use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_lm, LmConfig, NGramLanguageModel, UNK};
use crate::corpus::Sentence;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::textio;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 200,
            iterations: 20,
            seed: 1,
        }
    }
}

/// Total map from tokens to class ids. Tokens outside the map fall into
/// `unknown_class`.
#[derive(Clone, Debug, PartialEq)]
pub struct WordClassMap {
    class_of: HashMap<String, u32>,
    classes: usize,
    unknown_class: u32,
}

impl WordClassMap {
    pub fn new(class_of: HashMap<String, u32>, unknown_class: u32) -> Result<Self> {
        let classes = class_of
            .values()
            .chain(std::iter::once(&unknown_class))
            .max()
            .map_or(0, |&m| m as usize + 1);
        Ok(WordClassMap {
            class_of,
            classes,
            unknown_class,
        })
    }

    pub fn class_of(&self, token: &str) -> u32 {
        self.class_of
            .get(token)
            .copied()
            .unwrap_or(self.unknown_class)
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn unknown_class(&self) -> u32 {
        self.unknown_class
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    /// Token that stands for a class in class-level text.
    pub fn class_token(class: u32) -> String {
        format!("C{class}")
    }

    pub fn map_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens
            .iter()
            .map(|t| Self::class_token(self.class_of(t.as_ref())))
            .collect()
    }

    pub fn map_sentence(&self, s: &Sentence) -> Sentence {
        Sentence::from_tokens_unchecked(self.map_tokens(s.tokens()))
    }

    /// One `token<TAB>class` line per entry, sorted by token; the unknown
    /// class is written as the entry for `<unk>`.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut entries: Vec<(&String, &u32)> = self.class_of.iter().collect();
        entries.sort();
        writeln!(w, "{UNK}\t{}", self.unknown_class)?;
        for (t, c) in entries {
            if t != UNK {
                writeln!(w, "{t}\t{c}")?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        const FMT: &str = "word classes";
        let mut class_of = HashMap::new();
        let mut unknown = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (tok, class) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(FMT, i + 1, "expected `token<TAB>class`"))?;
            let class: u32 = class
                .trim()
                .parse()
                .map_err(|_| Error::parse(FMT, i + 1, "class is not an integer"))?;
            if tok.is_empty() || class_of.insert(tok.to_owned(), class).is_some() {
                return Err(Error::parse(FMT, i + 1, "empty or repeated token"));
            }
            if tok == UNK {
                unknown = Some(class);
            }
        }
        let unknown = unknown.ok_or_else(|| Error::parse(FMT, 0, "no <unk> entry"))?;
        class_of.remove(UNK);
        Self::new(class_of, unknown)
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        Self::read(textio::open_read(path)?)
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, |w| self.write(w))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(c, center)| (c, squared_distance(row, center)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

/// k-means with k-means++ seeding. Returns one cluster id per row.
pub(crate) fn kmeans(data: &EmbeddingMatrix, cfg: &KMeansConfig) -> Result<Vec<u32>> {
    let n = data.rows();
    if n == 0 {
        return Err(Error::EmptyVocabulary);
    }
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let distinct: HashSet<Vec<u64>> = (0..n)
        .map(|i| data.row(i).iter().map(|x| x.to_bits()).collect())
        .collect();
    let k = if distinct.len() < cfg.k {
        log::warn!(
            "only {} distinct vectors; reducing k from {} to {}",
            distinct.len(),
            cfg.k,
            distinct.len()
        );
        distinct.len()
    } else {
        cfg.k
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centers: Vec<Vec<f64>> = vec![data.row(rng.gen_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i), &centers[0]))
        .collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(&mut rng),
            // all remaining mass is zero: take any row not yet a center
            Err(_) => (0..n).find(|&i| d2[i] > 0.0).unwrap_or(0),
        };
        let c = data.row(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), &c));
        }
        centers.push(c);
    }

    let dim = data.dim();
    let mut assign = vec![0u32; n];
    for _ in 0..cfg.iterations {
        let next: Vec<u32> = (0..n)
            .into_par_iter()
            .map(|i| nearest(data.row(i), &centers).0 as u32)
            .collect();
        let changed = next != assign;
        assign = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            sizes[c as usize] += 1;
            for (s, x) in sums[c as usize].iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            // an empty cluster keeps its previous center
            if sizes[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Ok((0..n)
        .map(|i| nearest(data.row(i), &centers).0 as u32)
        .collect())
}

/// Clusters word vectors into classes. Row `i` of `embeddings` belongs to
/// `words[i]`. Unknown tokens go to the largest class.
pub fn induce_classes(
    words: &[String],
    embeddings: &EmbeddingMatrix,
    cfg: &KMeansConfig,
) -> Result<WordClassMap> {
    if words.len() != embeddings.rows() {
        return Err(Error::Mismatch(format!(
            "{} words but {} embedding rows",
            words.len(),
            embeddings.rows()
        )));
    }
    let assign = kmeans(embeddings, cfg)?;
    let mut sizes: HashMap<u32, usize> = HashMap::new();
    for &c in &assign {
        *sizes.entry(c).or_default() += 1;
    }
    let unknown = sizes
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&c, _)| c)
        .unwrap_or(0);
    let class_of = words.iter().cloned().zip(assign).collect();
    WordClassMap::new(class_of, unknown)
}

/// Language model over class tokens. The default order for class models
/// is 9.
pub fn train_class_lm<'a, I>(
    corpus: I,
    map: &WordClassMap,
    cfg: &LmConfig,
) -> Result<NGramLanguageModel>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mapped: Vec<Sentence> = corpus.into_iter().map(|s| map.map_sentence(s)).collect();
    let cfg = LmConfig {
        unk_from_singletons: false,
        ..cfg.clone()
    };
    Ok(train_lm(&mapped, &cfg)?.0)
}

impl LmConfig {
    /// Defaults for the word-class model.
    pub fn class_default() -> Self {
        LmConfig {
            order: 9,
            unk_from_singletons: false,
            ..LmConfig::default()
        }
    }
}
