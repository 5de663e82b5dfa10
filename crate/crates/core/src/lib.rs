//! Unsupervised grammatical error correction with phrase-based statistical
//! machine translation.
//!
//! The pipeline induces a phrase table from two comparable monolingual
//! corpora (a noisy, learner-like side and a clean side) through
//! cross-lingual n-gram embeddings, then refines it by iterative forward or
//! back-translation, tuning log-linear weights directly against GEC metrics.
//!
//! Module map:
//!
//! * [`corpus`]: tokenization, truecasing, BPE, length filters, synthetic noise
//! * [`embeddings`]: n-gram skip-gram training and self-learning mapping
//! * [`phrase_table`]: phrase table induction from mapped embeddings
//! * [`lm`]: modified Kneser-Ney n-gram models, ARPA I/O, word classes
//! * [`alignment`]: IBM Model 2 alignment, phrase extraction, relative-frequency tables
//! * [`decoder`]: monotone beam-search decoder and n-best lists
//! * [`tuning`]: minimum error rate training with exact line search
//! * [`refinement`]: forward/backward refinement loop
//! * [`spellcheck`]: edit-distance spell checker
//! * [`metrics`]: M² max-match scoring and GLEU
//! * [`pipeline`]: configuration-driven orchestration of all stages

pub mod alignment;
pub mod corpus;
pub mod decoder;
pub mod embeddings;
mod error;
pub mod fixture;
pub mod linalg;
pub mod lm;
pub mod metrics;
pub mod phrase_table;
pub mod pipeline;
pub mod refinement;
pub mod spellcheck;
pub mod textio;
pub mod tuning;

pub use crate::corpus::Sentence;
pub use crate::error::{Error, Result};
