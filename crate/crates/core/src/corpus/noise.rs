//! Synthetic learner-style noise. Produces the noisy side of a comparable
//! corpus when no machine-translated text is available.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Sentence;
use crate::error::{Error, Result};

pub const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our",
    "their", "some",
];

pub const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "for", "to", "of", "with", "from", "by", "about", "into",
];

const SUBJECT_PRONOUNS: &[&str] = &["i", "you", "he", "she", "it", "we", "they"];

const IRREGULAR_VERBS: &[(&str, &str)] = &[
    ("is", "are"),
    ("was", "were"),
    ("has", "have"),
    ("does", "do"),
    ("goes", "go"),
];

/// Per-operation firing probabilities. Every probability must lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub determiner_drop: f64,
    pub determiner_insert: f64,
    pub preposition_substitution: f64,
    pub verb_inflection: f64,
    pub noun_number: f64,
    pub token_swap: f64,
    pub random_deletion: f64,
    /// Character-level typos. Off by default: machine-translated text has none.
    pub spelling: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            determiner_drop: 0.05,
            determiner_insert: 0.05,
            preposition_substitution: 0.05,
            verb_inflection: 0.05,
            noun_number: 0.05,
            token_swap: 0.05,
            random_deletion: 0.05,
            spelling: 0.0,
            seed: 1,
        }
    }
}

impl NoiseConfig {
    /// All probabilities zero.
    pub fn silent(seed: u64) -> Self {
        NoiseConfig {
            determiner_drop: 0.0,
            determiner_insert: 0.0,
            preposition_substitution: 0.0,
            verb_inflection: 0.0,
            noun_number: 0.0,
            token_swap: 0.0,
            random_deletion: 0.0,
            spelling: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("determiner_drop", self.determiner_drop),
            ("determiner_insert", self.determiner_insert),
            ("preposition_substitution", self.preposition_substitution),
            ("verb_inflection", self.verb_inflection),
            ("noun_number", self.noun_number),
            ("token_swap", self.token_swap),
            ("random_deletion", self.random_deletion),
            ("spelling", self.spelling),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "noise probability {name}={p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

fn is_word(t: &str) -> bool {
    t.chars().all(char::is_alphabetic) && !t.is_empty()
}

fn is_determiner(t: &str) -> bool {
    DETERMINERS.contains(&t.to_lowercase().as_str())
}

fn is_preposition(t: &str) -> bool {
    PREPOSITIONS.contains(&t.to_lowercase().as_str())
}

fn toggle_verb(token: &str, prev: Option<&str>) -> Option<String> {
    let lower = token.to_lowercase();
    for &(a, b) in IRREGULAR_VERBS {
        if lower == a {
            return Some(b.to_owned());
        }
        if lower == b {
            return Some(a.to_owned());
        }
    }
    let after_pronoun = prev.is_some_and(|p| SUBJECT_PRONOUNS.contains(&p.to_lowercase().as_str()));
    if after_pronoun && is_word(token) && token.len() > 2 {
        return Some(match token.strip_suffix('s') {
            Some(stem) if !stem.ends_with('s') => stem.to_owned(),
            _ => format!("{token}s"),
        });
    }
    None
}

fn toggle_number(token: &str) -> String {
    match token.strip_suffix('s') {
        Some(stem) if !stem.ends_with('s') && !stem.is_empty() => stem.to_owned(),
        _ => format!("{token}s"),
    }
}

fn typo<R: Rng>(token: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = token.chars().collect();
    let i = rng.gen_range(0..chars.len() - 1);
    match rng.gen_range(0..3) {
        0 => chars.swap(i, i + 1),
        1 => {
            chars.remove(i + 1);
        }
        _ => {
            let c = chars[i];
            chars.insert(i, c);
        }
    }
    chars.into_iter().collect()
}

/// Perturbs one sentence with its own random stream.
pub fn synthesize_noise_one(sentence: &Sentence, cfg: &NoiseConfig, stream: u64) -> Sentence {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let tokens = sentence.tokens();
    let mut out: Vec<String> = Vec::with_capacity(tokens.len() + 2);
    for (i, token) in tokens.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| tokens[j].as_str());
        let insert = rng.gen_bool(cfg.determiner_insert);
        let delete = rng.gen_bool(cfg.random_deletion);
        if insert
            && is_word(token)
            && !is_determiner(token)
            && !out.last().is_some_and(|p| is_determiner(p))
        {
            out.push("the".to_owned());
        }
        if delete {
            continue;
        }
        if is_determiner(token) {
            if rng.gen_bool(cfg.determiner_drop) {
                continue;
            }
            out.push(token.clone());
        } else if is_preposition(token) {
            if rng.gen_bool(cfg.preposition_substitution) {
                let lower = token.to_lowercase();
                let choices: Vec<&&str> = PREPOSITIONS.iter().filter(|p| **p != lower).collect();
                out.push((**choices.choose(&mut rng).expect("nonempty")).to_owned());
            } else {
                out.push(token.clone());
            }
        } else {
            let mut t = token.clone();
            if let Some(v) = toggle_verb(token, prev) {
                if rng.gen_bool(cfg.verb_inflection) {
                    t = v;
                }
            } else if prev.is_some_and(is_determiner) && is_word(token) {
                if rng.gen_bool(cfg.noun_number) {
                    t = toggle_number(token);
                }
            }
            if t.chars().count() >= 3 && is_word(&t) && rng.gen_bool(cfg.spelling) {
                t = typo(&t, &mut rng);
            }
            out.push(t);
        }
    }
    if out.len() >= 2 {
        // never move sentence-final punctuation
        let limit = if out.last().is_some_and(|t| !is_word(t)) {
            out.len() - 1
        } else {
            out.len()
        };
        let mut i = 0;
        while i + 1 < limit {
            if rng.gen_bool(cfg.token_swap) {
                out.swap(i, i + 1);
                i += 2;
            } else {
                i += 1;
            }
        }
    }
    Sentence::from_tokens_unchecked(out)
}

/// Perturbs every sentence independently. Sentence `i` uses random stream
/// `i`, so output does not depend on thread scheduling.
pub fn synthesize_noise(corpus: &[Sentence], cfg: &NoiseConfig) -> Result<Vec<Sentence>> {
    cfg.validate()?;
    Ok(corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| synthesize_noise_one(s, cfg, i as u64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Sentence> {
        [
            "the cat sat on the mat .",
            "he walks to the store every day .",
            "she is happy with her new books .",
            "they have a dog in their house .",
        ]
        .iter()
        .map(|s| Sentence::from_line(s))
        .collect()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let c = corpus();
        assert_eq!(synthesize_noise(&c, &NoiseConfig::silent(7)).unwrap(), c);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let c = corpus();
        let cfg = NoiseConfig {
            seed: 42,
            ..NoiseConfig::default()
        };
        assert_eq!(
            synthesize_noise(&c, &cfg).unwrap(),
            synthesize_noise(&c, &cfg).unwrap()
        );
    }

    #[test]
    fn determiner_drop_always_fires() {
        let cfg = NoiseConfig {
            determiner_drop: 1.0,
            ..NoiseConfig::silent(3)
        };
        let out = synthesize_noise(&[Sentence::from_line("the cat sat")], &cfg).unwrap();
        assert_eq!(out[0], Sentence::from_line("cat sat"));
    }

    #[test]
    fn targeted_operations() {
        let s = Sentence::from_line("he walks to the store");
        let verb = NoiseConfig {
            verb_inflection: 1.0,
            ..NoiseConfig::silent(1)
        };
        assert_eq!(
            synthesize_noise_one(&s, &verb, 0),
            Sentence::from_line("he walk to the store")
        );
        let noun = NoiseConfig {
            noun_number: 1.0,
            ..NoiseConfig::silent(1)
        };
        assert_eq!(
            synthesize_noise_one(&s, &noun, 0),
            Sentence::from_line("he walks to the stores")
        );
        let prep = NoiseConfig {
            preposition_substitution: 1.0,
            ..NoiseConfig::silent(1)
        };
        let out = synthesize_noise_one(&s, &prep, 0);
        assert_ne!(out.tokens()[2], "to");
        assert!(PREPOSITIONS.contains(&out.tokens()[2].as_str()));
    }

    #[test]
    fn invalid_probability_rejected() {
        let cfg = NoiseConfig {
            token_swap: 1.5,
            ..NoiseConfig::default()
        };
        assert!(synthesize_noise(&corpus(), &cfg).is_err());
    }
}
