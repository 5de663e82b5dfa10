//! Toy comparable corpus for desk-scale runs: a small English grammar for
//! clean text, synthetic noise for the learner side, and noisy/clean pairs
//! annotated as M² for tuning and evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{synthesize_noise, NoiseConfig, Sentence, DETERMINERS, PREPOSITIONS};
use crate::decoder::char_edit_ops;
use crate::error::Result;
use crate::metrics::{extract_system_edits, write_m2_path, EditAnnotation, M2Sentence, MaxMatchConfig};
use crate::textio;

const NOUNS: &[(&str, &str)] = &[
    ("man", "men"),
    ("woman", "women"),
    ("child", "children"),
    ("student", "students"),
    ("teacher", "teachers"),
    ("doctor", "doctors"),
    ("friend", "friends"),
    ("neighbor", "neighbors"),
    ("girl", "girls"),
    ("boy", "boys"),
    ("farmer", "farmers"),
    ("driver", "drivers"),
    ("book", "books"),
    ("letter", "letters"),
    ("car", "cars"),
    ("house", "houses"),
    ("computer", "computers"),
    ("picture", "pictures"),
    ("song", "songs"),
    ("dog", "dogs"),
    ("cat", "cats"),
    ("bird", "birds"),
    ("table", "tables"),
    ("window", "windows"),
    ("question", "questions"),
    ("problem", "problems"),
    ("story", "stories"),
    ("city", "cities"),
    ("company", "companies"),
    ("newspaper", "newspapers"),
    ("bottle", "bottles"),
    ("ticket", "tickets"),
    ("garden", "gardens"),
    ("movie", "movies"),
    ("game", "games"),
    ("phone", "phones"),
];

const AGENTS: usize = 12;

const ADJECTIVES: &[&str] = &[
    "old", "young", "new", "small", "big", "good", "bad", "happy", "busy", "quiet", "strange",
    "beautiful", "famous", "tired", "friendly", "little", "long", "short", "red", "green",
];

/// (third person singular, plural, past)
const TRANSITIVE: &[(&str, &str, &str)] = &[
    ("reads", "read", "read"),
    ("writes", "write", "wrote"),
    ("likes", "like", "liked"),
    ("buys", "buy", "bought"),
    ("sees", "see", "saw"),
    ("wants", "want", "wanted"),
    ("needs", "need", "needed"),
    ("finds", "find", "found"),
    ("makes", "make", "made"),
    ("takes", "take", "took"),
    ("has", "have", "had"),
    ("gets", "get", "got"),
    ("sells", "sell", "sold"),
    ("loves", "love", "loved"),
    ("watches", "watch", "watched"),
    ("cleans", "clean", "cleaned"),
];

/// (third person singular, plural, past, preposition)
const INTRANSITIVE: &[(&str, &str, &str, &str)] = &[
    ("walks", "walk", "walked", "to"),
    ("goes", "go", "went", "to"),
    ("lives", "live", "lived", "in"),
    ("works", "work", "worked", "at"),
    ("sits", "sit", "sat", "on"),
    ("waits", "wait", "waited", "for"),
    ("talks", "talk", "talked", "about"),
    ("comes", "come", "came", "from"),
    ("looks", "look", "looked", "at"),
    ("listens", "listen", "listened", "to"),
];

const PLACES: &[&str] = &[
    "park", "school", "station", "office", "library", "market", "river", "hospital", "beach",
    "museum", "kitchen", "village", "bridge", "restaurant", "airport", "shop",
];

const TIMES: &[&str] = &["every day", "today", "on monday", "in the morning", "at night", "every week"];
const PAST_TIMES: &[&str] = &["yesterday", "last week", "last night", "on sunday"];

const SINGULAR_DETS: &[&str] = &["the", "a", "this", "that", "my", "your", "his", "her", "our", "their"];
const PLURAL_DETS: &[&str] = &["the", "these", "those", "my", "your", "our", "their", "some"];

struct Grammar<'r> {
    rng: &'r mut ChaCha8Rng,
}

impl Grammar<'_> {
    fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        xs.choose(self.rng).expect("nonempty")
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// Noun phrase; returns the words and whether it is plural.
    fn noun_phrase(&mut self, agent: bool) -> (Vec<String>, bool) {
        let nouns = if agent { &NOUNS[..AGENTS] } else { &NOUNS[AGENTS..] };
        let &(sg, pl) = self.pick(nouns);
        let plural = self.chance(0.35);
        let mut out = Vec::new();
        let det = if plural { *self.pick(PLURAL_DETS) } else { *self.pick(SINGULAR_DETS) };
        let adj = self.chance(0.4).then(|| *self.pick(ADJECTIVES));
        let next = adj.unwrap_or(if plural { pl } else { sg });
        let det = if det == "a" && next.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { det };
        out.push(det.to_owned());
        out.extend(adj.map(str::to_owned));
        out.push((if plural { pl } else { sg }).to_owned());
        (out, plural)
    }

    fn subject(&mut self) -> (Vec<String>, bool) {
        if self.chance(0.25) {
            let (p, plural) = *self.pick(&[("he", false), ("she", false), ("they", true), ("we", true)]);
            (vec![p.to_owned()], plural)
        } else {
            self.noun_phrase(true)
        }
    }

    fn place(&mut self) -> Vec<String> {
        vec!["the".to_owned(), (*self.pick(PLACES)).to_owned()]
    }

    fn sentence(&mut self) -> Vec<String> {
        let (mut words, plural) = self.subject();
        let past = self.chance(0.3);
        let verb = |v: (&str, &str, &str)| -> String {
            (if past { v.2 } else if plural { v.1 } else { v.0 }).to_owned()
        };
        match self.rng.gen_range(0..3) {
            0 => {
                let &(a, b, c) = self.pick(TRANSITIVE);
                words.push(verb((a, b, c)));
                words.extend(self.noun_phrase(false).0);
                if self.chance(0.4) {
                    words.push("in".to_owned());
                    words.extend(self.place());
                }
            }
            1 => {
                let &(a, b, c, prep) = self.pick(INTRANSITIVE);
                words.push(verb((a, b, c)));
                words.push(prep.to_owned());
                if matches!(prep, "about" | "for" | "at") && self.chance(0.5) {
                    words.extend(self.noun_phrase(false).0);
                } else {
                    words.extend(self.place());
                }
            }
            _ => {
                let copula = if past {
                    if plural { "were" } else { "was" }
                } else if plural {
                    "are"
                } else {
                    "is"
                };
                words.push(copula.to_owned());
                if self.chance(0.5) {
                    words.push((*self.pick(ADJECTIVES)).to_owned());
                } else {
                    words.push((*self.pick(&["in", "at", "near"])).to_owned());
                    words.extend(self.place());
                }
            }
        }
        if self.chance(0.5) {
            let t = if past { *self.pick(PAST_TIMES) } else { *self.pick(TIMES) };
            words.extend(t.split(' ').map(str::to_owned));
        }
        if let Some(first) = words.first_mut() {
            let mut cs = first.chars();
            if let Some(c) = cs.next() {
                *first = c.to_uppercase().chain(cs).collect();
            }
        }
        words.push(".".to_owned());
        words
    }
}

/// `n` grammatical tokenized sentences.
pub fn generate_clean(n: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Grammar { rng: &mut rng };
    (0..n)
        .map(|_| Sentence::new(g.sentence()).expect("grammar words have no whitespace"))
        .collect()
}

/// Error type of an edit from its two sides, using M²-style operation
/// prefixes: M (missing), U (unnecessary), R (replacement).
pub fn classify_edit(original: &[String], corrected: &[String]) -> String {
    let lower = |xs: &[String]| xs.iter().map(|x| x.to_lowercase()).collect::<Vec<_>>();
    let (o, c) = (lower(original), lower(corrected));
    let op = match (o.is_empty(), c.is_empty()) {
        (true, _) => "M",
        (_, true) => "U",
        _ => "R",
    };
    let all = |xs: &[String], set: &[&str]| !xs.is_empty() && xs.iter().all(|x| set.contains(&x.as_str()));
    let side = if o.is_empty() { &c } else { &o };
    let kind = if all(side, DETERMINERS) && (c.is_empty() || o.is_empty() || all(&c, DETERMINERS)) {
        "DET"
    } else if all(side, PREPOSITIONS) && (c.is_empty() || o.is_empty() || all(&c, PREPOSITIONS)) {
        "PREP"
    } else if o.len() == 1 && c.len() == 1 {
        let verbs = TRANSITIVE
            .iter()
            .flat_map(|v| [v.0, v.1, v.2])
            .chain(INTRANSITIVE.iter().flat_map(|v| [v.0, v.1, v.2]))
            .chain(["is", "are", "was", "were", "has", "have", "does", "do"])
            .collect::<Vec<_>>();
        let nouns = NOUNS.iter().flat_map(|n| [n.0, n.1]).collect::<Vec<_>>();
        let (a, b) = (o[0].as_str(), c[0].as_str());
        if verbs.contains(&a) && verbs.contains(&b) {
            "VERB:SVA"
        } else if nouns.contains(&a) && nouns.contains(&b) {
            "NOUN:NUM"
        } else if char_edit_ops(&[a], &[b]).distance <= 2 {
            "SPELL"
        } else {
            "OTHER"
        }
    } else if o.len() == c.len() && {
        let (mut x, mut y) = (o.clone(), c.clone());
        x.sort();
        y.sort();
        x == y
    } {
        "WO"
    } else {
        "OTHER"
    };
    if kind == "SPELL" || kind == "WO" {
        return kind.to_owned();
    }
    format!("{op}:{kind}")
}

/// Gold edits turning `noisy` into `clean`, taken as the minimal token
/// edits between the two.
pub fn annotate(noisy: &Sentence, clean: &Sentence) -> M2Sentence {
    let edits = extract_system_edits(noisy.tokens(), clean.tokens(), &[], &MaxMatchConfig::default());
    let anns = edits
        .into_iter()
        .map(|e| {
            let kind = classify_edit(&noisy.tokens()[e.start..e.end], &e.replacement);
            EditAnnotation {
                edit: e,
                kind,
                annotator: 0,
            }
        })
        .collect();
    M2Sentence {
        source: noisy.clone(),
        annotators: BTreeMap::from([(0, anns)]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    /// Sentences on each side of the comparable corpus.
    pub sentences: usize,
    pub tuning: usize,
    pub dev: usize,
    pub noise: NoiseConfig,
    /// Typo rate of the misspelled dev set.
    pub dev_spelling: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            sentences: 2000,
            tuning: 200,
            dev: 200,
            noise: NoiseConfig::default(),
            dev_spelling: 0.08,
            seed: 7,
        }
    }
}

/// Generated corpora. The two sides come from disjoint clean samples, so
/// they are comparable but not parallel.
#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub source: Vec<Sentence>,
    pub target: Vec<Sentence>,
    pub tuning: Vec<M2Sentence>,
    pub dev: Vec<M2Sentence>,
    pub dev_misspelled: Vec<M2Sentence>,
}

fn noisy_pairs(clean: &[Sentence], cfg: &NoiseConfig) -> Result<Vec<M2Sentence>> {
    let noisy = synthesize_noise(clean, cfg)?;
    Ok(noisy.iter().zip(clean).map(|(n, c)| annotate(n, c)).collect())
}

pub fn make_toy_corpus(cfg: &ToyConfig) -> Result<ToyCorpus> {
    let total = 2 * cfg.sentences + cfg.tuning + cfg.dev;
    let clean = generate_clean(total, cfg.seed);
    let (c_s, rest) = clean.split_at(cfg.sentences);
    let (c_t, rest) = rest.split_at(cfg.sentences);
    let (tune, dev) = rest.split_at(cfg.tuning);
    let noise = |label: &str| NoiseConfig {
        seed: textio::derive_seed(cfg.seed, label),
        ..cfg.noise.clone()
    };
    let source = synthesize_noise(c_s, &noise("source"))?;
    let tuning = noisy_pairs(tune, &noise("tuning"))?;
    let dev_set = noisy_pairs(dev, &noise("dev"))?;
    let misspelled = noisy_pairs(
        dev,
        &NoiseConfig {
            spelling: cfg.dev_spelling,
            ..noise("dev")
        },
    )?;
    Ok(ToyCorpus {
        source,
        target: c_t.to_vec(),
        tuning,
        dev: dev_set,
        dev_misspelled: misspelled,
    })
}

pub const TOY_FILES: [&str; 5] = ["source.txt", "target.txt", "tune.m2", "dev.m2", "dev-misspelled.m2"];

impl ToyCorpus {
    /// Writes the corpus files named in [`TOY_FILES`] into `dir`. The
    /// monolingual sides are detokenized-looking raw text only in spacing;
    /// tokens are separated by single spaces.
    pub fn write(&self, dir: &Path) -> Result<()> {
        textio::write_sentences(&dir.join(TOY_FILES[0]), &self.source)?;
        textio::write_sentences(&dir.join(TOY_FILES[1]), &self.target)?;
        write_m2_path(&dir.join(TOY_FILES[2]), &self.tuning)?;
        write_m2_path(&dir.join(TOY_FILES[3]), &self.dev)?;
        write_m2_path(&dir.join(TOY_FILES[4]), &self.dev_misspelled)?;
        Ok(())
    }
}
