//! Configuration-driven orchestration of every stage, from raw corpora to
//! the final evaluation report.
//!
//! Each stage writes into its own workspace directory and finishes by
//! writing `stage.json`, which records a fingerprint of the stage's
//! configuration and upstream files plus the hash of every output. A
//! stage whose manifest matches is skipped on the next run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignerConfig, DEFAULT_MAX_PHRASE_LEN};
use crate::corpus::{
    learn_bpe, length_filter, tokenize, train_truecaser, BpeModel, LengthBounds, Sentence, TruecaseModel,
};
use crate::decoder::{ClassLm, Decoder, DecoderConfig, Weights};
use crate::embeddings::{
    map_embeddings, normalize_embeddings, read_embeddings, train_ngram_embeddings, write_embeddings, MappingConfig,
    NGramCutoffs, NGramVocabulary, SkipGramConfig,
};
use crate::error::{Error, Result};
use crate::lm::{induce_classes, train_class_lm, train_lm, KMeansConfig, LmConfig, NGramLanguageModel, WordClassMap};
use crate::metrics::{read_m2_path, write_m2_path, EditAnnotation, GleuConfig, M2Sentence};
use crate::phrase_table::{induce_table, InductionConfig, PhraseTable};
use crate::refinement::{
    run_refinement, score_dev, DevScore, InitialTables, Mode, ModelFiles, RefinementConfig, RefinementInputs,
    RefinementPlan,
};
use crate::spellcheck::{build_wordlist, correct_corpus, WordList};
use crate::textio::{self, derive_seed, sha256_file, HashWriter};
use crate::tuning::{References, TuningConfig, TuningSet};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// `C_s`: learner-like monolingual text, one sentence per line.
    pub source: PathBuf,
    /// `C_t`: clean monolingual text.
    pub target: PathBuf,
    /// Further clean text, each trained into its own language model.
    pub extra_lm: Vec<PathBuf>,
    /// Tuning set in M² format.
    pub tuning: PathBuf,
    /// Development set in M² format; selects the refinement iteration.
    pub dev: PathBuf,
    /// Optional held-out set in M² format.
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub tokenize: bool,
    pub truecase: bool,
    /// BPE merge operations; 0 disables subword segmentation.
    pub bpe_operations: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            tokenize: true,
            truecase: true,
            bpe_operations: 50_000,
            min_len: LengthBounds::MONO.min,
            max_len: LengthBounds::MONO.max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub unigram_cutoff: usize,
    pub bigram_cutoff: usize,
    pub trigram_cutoff: usize,
}

impl Default for EmbeddingsConfig {
    fn default() -> Self {
        let sg = SkipGramConfig::default();
        let cut = NGramCutoffs::default();
        EmbeddingsConfig {
            dim: sg.dim,
            window: sg.window,
            negatives: sg.negatives,
            epochs: sg.epochs,
            learning_rate: sg.learning_rate,
            unigram_cutoff: cut.unigrams,
            bigram_cutoff: cut.bigrams,
            trigram_cutoff: cut.trigrams,
        }
    }
}

impl EmbeddingsConfig {
    fn skipgram(&self, seed: u64) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
        }
    }

    fn cutoffs(&self) -> NGramCutoffs {
        NGramCutoffs {
            unigrams: self.unigram_cutoff,
            bigrams: self.bigram_cutoff,
            trigrams: self.trigram_cutoff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassLmConfig {
    pub enabled: bool,
    pub order: usize,
    pub classes: usize,
    pub kmeans_iterations: usize,
}

impl Default for ClassLmConfig {
    fn default() -> Self {
        ClassLmConfig {
            enabled: true,
            order: LmConfig::class_default().order,
            classes: KMeansConfig::default().k,
            kmeans_iterations: KMeansConfig::default().iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementSection {
    pub mode: Mode,
    pub iterations: usize,
    pub synthetic_beam: usize,
    pub max_phrase_len: usize,
    pub reset_weights: bool,
}

impl Default for RefinementSection {
    fn default() -> Self {
        let r = RefinementConfig::default();
        RefinementSection {
            mode: r.mode,
            iterations: r.iterations,
            synthetic_beam: r.synthetic_beam,
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
            reset_weights: r.reset_weights,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpellcheckConfig {
    pub enabled: bool,
    pub min_frequency: u64,
}

impl Default for SpellcheckConfig {
    fn default() -> Self {
        SpellcheckConfig {
            enabled: true,
            min_frequency: crate::spellcheck::DEFAULT_MIN_FREQUENCY,
        }
    }
}

/// The whole pipeline configuration. Relative data paths resolve against
/// the directory of the configuration file. Seeds inside module sections
/// are ignored: every stage derives its own from `seed`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub embeddings: EmbeddingsConfig,
    pub mapping: MappingConfig,
    pub induction: InductionConfig,
    pub lm: LmConfig,
    pub class_lm: ClassLmConfig,
    pub aligner: AlignerConfig,
    pub decoder: DecoderConfig,
    pub tuning: TuningConfig,
    pub refinement: RefinementSection,
    pub spellcheck: SpellcheckConfig,
    pub gleu: GleuConfig,
}

/// Keys present in `raw` but not in `known`.
fn unknown_keys(raw: &toml::Value, known: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    if let (toml::Value::Table(r), toml::Value::Table(k)) = (raw, known) {
        for (key, v) in r {
            let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
            match k.get(key) {
                Some(kv) => unknown_keys(v, kv, &path, out),
                // optional keys are absent from the serialized defaults
                None if matches!(path.as_str(), "data.test" | "induction.tau") => {}
                None => out.push(path),
            }
        }
    }
}

impl PipelineConfig {
    /// Parses TOML text; unknown keys are errors. Paths stay as written.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let known = toml::Value::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut unknown = Vec::new();
        unknown_keys(&raw, &known, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut self.data;
        fix(&mut d.source);
        fix(&mut d.target);
        fix(&mut d.tuning);
        fix(&mut d.dev);
        d.extra_lm.iter_mut().for_each(fix);
        if let Some(t) = d.test.as_mut() {
            fix(t);
        }
    }

    /// Checks that every data file exists and that settings are usable.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let mut required: Vec<(&str, &PathBuf)> = vec![
            ("data.source", &d.source),
            ("data.target", &d.target),
            ("data.tuning", &d.tuning),
            ("data.dev", &d.dev),
        ];
        required.extend(d.extra_lm.iter().map(|p| ("data.extra_lm", p)));
        required.extend(d.test.iter().map(|p| ("data.test", p)));
        for (name, p) in required {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("{name} is not set")));
            }
            if !p.is_file() {
                return Err(Error::Config(format!("{name}: {} does not exist", p.display())));
            }
        }
        if self.refinement.iterations == 0 {
            return Err(Error::Config("refinement.iterations must be >= 1".into()));
        }
        if self.preprocess.min_len > self.preprocess.max_len {
            return Err(Error::Config("preprocess.min_len exceeds max_len".into()));
        }
        self.tuning.validate()
    }

    fn refinement_config(&self) -> RefinementConfig {
        RefinementConfig {
            mode: self.refinement.mode,
            iterations: self.refinement.iterations,
            synthetic_beam: self.refinement.synthetic_beam,
            max_phrase_len: self.refinement.max_phrase_len,
            reset_weights: self.refinement.reset_weights,
            aligner: self.aligner.clone(),
            decoder: self.decoder.clone(),
            tuning: TuningConfig {
                seed: derive_seed(self.seed, "tuning"),
                ..self.tuning.clone()
            },
            gleu: self.gleu.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "message")]
pub enum StageStatus {
    Complete,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub fingerprint: String,
    pub status: StageStatus,
    /// Output files relative to the stage directory, with their hashes.
    pub files: BTreeMap<String, String>,
}

const STAGE_MANIFEST: &str = "stage.json";

/// Stage directories under one workspace.
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    fn manifest(&self, stage: &str) -> Option<StageManifest> {
        let text = fs::read_to_string(self.stage_dir(stage).join(STAGE_MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn write_manifest(&self, m: &StageManifest) -> Result<()> {
        let path = self.stage_dir(&m.stage).join(STAGE_MANIFEST);
        let json = serde_json::to_string_pretty(m).expect("manifest serializes");
        textio::write_atomic(&path, |w| {
            w.write_all(json.as_bytes())?;
            w.write_all(b"\n")
        })
    }

    /// Runs `body` unless a complete manifest with the same fingerprint
    /// exists and all its files still match. `body` returns the output
    /// files, relative to the stage directory.
    fn run<F>(&self, stage: &str, fingerprint: String, body: F) -> Result<(StageManifest, bool)>
    where
        F: FnOnce(&Path) -> Result<Vec<String>>,
    {
        let dir = self.stage_dir(stage);
        if let Some(m) = self.manifest(stage) {
            let intact = m.status == StageStatus::Complete
                && m.fingerprint == fingerprint
                && m.files.iter().all(|(f, h)| sha256_file(&dir.join(f)).is_ok_and(|x| &x == h));
            if intact {
                log::info!("stage {stage}: up to date");
                return Ok((m, true));
            }
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stale = dir.join(STAGE_MANIFEST);
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
        log::info!("stage {stage}: running");
        let mut manifest = StageManifest {
            stage: stage.to_owned(),
            fingerprint,
            status: StageStatus::Complete,
            files: BTreeMap::new(),
        };
        match body(&dir) {
            Ok(files) => {
                for f in files {
                    let h = sha256_file(&dir.join(&f))?;
                    manifest.files.insert(f, h);
                }
                self.write_manifest(&manifest)?;
                Ok((manifest, false))
            }
            Err(e) => {
                manifest.status = StageStatus::Failed(e.to_string());
                self.write_manifest(&manifest)?;
                Err(e)
            }
        }
    }
}

fn fingerprint(stage: &str, config: &impl Serialize, upstream: &[&StageManifest]) -> String {
    let mut h = HashWriter::new();
    let cfg = serde_json::to_string(config).expect("config serializes");
    let mut text = format!("{stage}\n{cfg}\n");
    for m in upstream {
        let _ = writeln!(text, "{} {}", m.stage, m.fingerprint);
        for (f, hash) in &m.files {
            let _ = writeln!(text, "\t{f} {hash}");
        }
    }
    std::io::Write::write_all(&mut h, text.as_bytes()).expect("hashing cannot fail");
    h.finish()
}

fn file_hashes(paths: &[&PathBuf]) -> Result<Vec<String>> {
    paths.iter().map(|p| sha256_file(p)).collect()
}

/// Truecases an M² sentence: the source's first token and the first token
/// of any replacement placed at the start of the sentence.
pub fn truecase_m2(model: &TruecaseModel, s: &M2Sentence) -> M2Sentence {
    let annotators = s
        .annotators
        .iter()
        .map(|(&id, edits)| {
            let edits = edits
                .iter()
                .map(|a| {
                    let mut a: EditAnnotation = a.clone();
                    if a.edit.start == 0 && !a.edit.replacement.is_empty() {
                        let r = Sentence::new(a.edit.replacement.clone()).expect("M² tokens are whitespace-free");
                        a.edit.replacement = model.apply(&r).into_tokens();
                    }
                    a
                })
                .collect();
            (id, edits)
        })
        .collect();
    M2Sentence {
        source: model.apply(&s.source),
        annotators,
    }
}

fn read_raw(path: &Path, pre: &PreprocessConfig) -> Result<Vec<Sentence>> {
    let sentences: Vec<Sentence> = if pre.tokenize {
        textio::read_lines(path)?.iter().map(|l| tokenize(l)).collect()
    } else {
        textio::read_sentences(path)?
    };
    let bounds = LengthBounds {
        min: pre.min_len,
        max: pre.max_len,
    };
    Ok(length_filter(sentences, bounds).collect())
}

/// Loaded preprocessing models.
struct Preprocessing {
    truecaser: Option<TruecaseModel>,
    bpe: Option<BpeModel>,
}

impl Preprocessing {
    fn load(dir: &Path) -> Result<Self> {
        let tc = dir.join("truecase.model");
        let bpe = dir.join("bpe.model");
        Ok(Preprocessing {
            truecaser: tc.exists().then(|| TruecaseModel::read(textio::open_read(&tc)?)).transpose()?,
            bpe: bpe.exists().then(|| BpeModel::read(textio::open_read(&bpe)?)).transpose()?,
        })
    }

    fn truecase(&self, s: &Sentence) -> Sentence {
        match &self.truecaser {
            Some(t) => t.apply(s),
            None => s.clone(),
        }
    }

    fn truecase_m2(&self, s: &M2Sentence) -> M2Sentence {
        match &self.truecaser {
            Some(t) => truecase_m2(t, s),
            None => s.clone(),
        }
    }

    fn segment(&self, s: &Sentence) -> Sentence {
        match &self.bpe {
            Some(b) => b.apply(s),
            None => s.clone(),
        }
    }
}

fn stage_preprocess(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let pre = &cfg.preprocess;
    let source = read_raw(&cfg.data.source, pre)?;
    let target = read_raw(&cfg.data.target, pre)?;
    let extra: Vec<Vec<Sentence>> = cfg.data.extra_lm.iter().map(|p| read_raw(p, pre)).collect::<Result<_>>()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::InsufficientData("a monolingual corpus is empty after filtering".into()));
    }
    let mut files = Vec::new();
    let truecaser = if pre.truecase {
        let model = train_truecaser(target.iter().chain(extra.iter().flatten()))?;
        textio::write_atomic(&dir.join("truecase.model"), |w| model.write(w))?;
        files.push("truecase.model".to_owned());
        Some(model)
    } else {
        None
    };
    let tc = |c: Vec<Sentence>| -> Vec<Sentence> {
        match &truecaser {
            Some(t) => c.iter().map(|s| t.apply(s)).collect(),
            None => c,
        }
    };
    let (source, target) = (tc(source), tc(target));
    let extra: Vec<Vec<Sentence>> = extra.into_iter().map(tc).collect();
    let bpe = if pre.bpe_operations > 0 {
        let model = learn_bpe(&target, pre.bpe_operations)?;
        textio::write_atomic(&dir.join("bpe.model"), |w| model.write(w))?;
        files.push("bpe.model".to_owned());
        Some(model)
    } else {
        None
    };
    let seg = |c: &[Sentence]| -> Vec<Sentence> {
        match &bpe {
            Some(b) => c.iter().map(|s| b.apply(s)).collect(),
            None => c.to_vec(),
        }
    };
    let mut write = |name: String, c: &[Sentence]| -> Result<()> {
        textio::write_sentences(&dir.join(&name), c)?;
        files.push(name);
        Ok(())
    };
    write("source.tok".into(), &source)?;
    write("target.tok".into(), &target)?;
    write("source.bpe".into(), &seg(&source))?;
    write("target.bpe".into(), &seg(&target))?;
    for (i, c) in extra.iter().enumerate() {
        write(format!("extra-{i}.bpe"), &seg(c))?;
    }
    let prep = Preprocessing { truecaser, bpe };
    let mut sets = vec![("tune", &cfg.data.tuning), ("dev", &cfg.data.dev)];
    sets.extend(cfg.data.test.iter().map(|p| ("test", p)));
    for (name, path) in sets {
        let gold: Vec<M2Sentence> = read_m2_path(path)?.iter().map(|s| prep.truecase_m2(s)).collect();
        write_m2_path(&dir.join(format!("{name}.m2")), &gold)?;
        let inputs: Vec<Sentence> = gold.iter().map(|s| prep.segment(&s.source)).collect();
        textio::write_sentences(&dir.join(format!("{name}.input")), &inputs)?;
        files.push(format!("{name}.m2"));
        files.push(format!("{name}.input"));
    }
    Ok(files)
}

fn read_vectors(path: &Path) -> Result<(NGramVocabulary, crate::embeddings::EmbeddingMatrix)> {
    read_embeddings(textio::open_read(path)?)
}

fn stage_embeddings(cfg: &PipelineConfig, pre: &Path, dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for side in ["source", "target"] {
        let corpus = textio::read_sentences(&pre.join(format!("{side}.bpe")))?;
        let vocab = NGramVocabulary::build(&corpus, cfg.embeddings.cutoffs());
        let sg = cfg.embeddings.skipgram(derive_seed(cfg.seed, &format!("embeddings/{side}")));
        let m = train_ngram_embeddings(&corpus, &vocab, &sg)?;
        let name = format!("{side}.vec");
        textio::write_atomic(&dir.join(&name), |w| write_embeddings(&vocab, &m, w))?;
        files.push(name);
    }
    Ok(files)
}

fn stage_mapping(cfg: &PipelineConfig, emb: &Path, dir: &Path) -> Result<Vec<String>> {
    let (sv, sm) = read_vectors(&emb.join("source.vec"))?;
    let (tv, tm) = read_vectors(&emb.join("target.vec"))?;
    let (sm, _) = normalize_embeddings(&sm);
    let (tm, _) = normalize_embeddings(&tm);
    let mcfg = MappingConfig {
        seed: derive_seed(cfg.seed, "mapping"),
        ..cfg.mapping.clone()
    };
    let (mapping, report) = map_embeddings(&sv, &sm, &tv, &tm, &mcfg)?;
    log::info!(
        "mapping: {} iterations, seed dictionary {}",
        report.iterations,
        report.seed_size
    );
    textio::write_atomic(&dir.join("source.mapped.vec"), |w| write_embeddings(&sv, &mapping.map_source(&sm), w))?;
    textio::write_atomic(&dir.join("target.mapped.vec"), |w| write_embeddings(&tv, &mapping.map_target(&tm), w))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    textio::write_atomic(&dir.join("report.json"), |w| w.write_all(json.as_bytes()))?;
    Ok(vec!["source.mapped.vec".into(), "target.mapped.vec".into(), "report.json".into()])
}

fn stage_induction(cfg: &PipelineConfig, map: &Path, dir: &Path) -> Result<Vec<String>> {
    let (sv, sm) = read_vectors(&map.join("source.mapped.vec"))?;
    let (tv, tm) = read_vectors(&map.join("target.mapped.vec"))?;
    let mut files = Vec::new();
    let (s2t, tau) = induce_table(&sv, &sm, &tv, &tm, &cfg.induction)?;
    log::info!("induced s2t table: {} entries, tau {:.4}", s2t.len(), tau.value());
    s2t.write_path(&dir.join("s2t.phrases"))?;
    files.push("s2t.phrases".to_owned());
    if cfg.refinement.mode == Mode::Backward {
        let (t2s, _) = induce_table(&tv, &tm, &sv, &sm, &cfg.induction)?;
        t2s.write_path(&dir.join("t2s.phrases"))?;
        files.push("t2s.phrases".to_owned());
    }
    Ok(files)
}

fn stage_lm(cfg: &PipelineConfig, pre: &Path, emb: &Path, dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut train = |corpus: &Path, name: &str| -> Result<()> {
        let c = textio::read_sentences(corpus)?;
        let (lm, smoothing) = train_lm(&c, &cfg.lm)?;
        log::info!("{name}: order {} smoothing {:?}", lm.order(), smoothing);
        lm.write_arpa_path(&dir.join(name))?;
        files.push(name.to_owned());
        Ok(())
    };
    train(&pre.join("target.bpe"), "target.arpa")?;
    for i in 0..cfg.data.extra_lm.len() {
        train(&pre.join(format!("extra-{i}.bpe")), &format!("extra-{i}.arpa"))?;
    }
    if cfg.refinement.mode == Mode::Backward {
        train(&pre.join("source.bpe"), "source.arpa")?;
    }
    if cfg.class_lm.enabled {
        let (vocab, m) = read_vectors(&emb.join("target.vec"))?;
        let (m, _) = normalize_embeddings(&m);
        let idx = vocab.unigram_indices();
        let words: Vec<String> = idx.iter().map(|&i| vocab.ngram(i)[0].clone()).collect();
        let km = KMeansConfig {
            k: cfg.class_lm.classes,
            iterations: cfg.class_lm.kmeans_iterations,
            seed: derive_seed(cfg.seed, "classes"),
        };
        let classes = induce_classes(&words, &m.select(&idx), &km)?;
        classes.write_path(&dir.join("classes.txt"))?;
        let corpus = textio::read_sentences(&pre.join("target.bpe"))?;
        let lcfg = LmConfig {
            order: cfg.class_lm.order,
            ..LmConfig::class_default()
        };
        train_class_lm(&corpus, &classes, &lcfg)?.write_arpa_path(&dir.join("class.arpa"))?;
        files.push("classes.txt".into());
        files.push("class.arpa".into());
    }
    Ok(files)
}

/// Language models of the s→t direction, read from the `lm` stage.
struct TargetModels {
    lms: Vec<NGramLanguageModel>,
    class: Option<(NGramLanguageModel, WordClassMap)>,
    source_lm: Option<NGramLanguageModel>,
}

impl TargetModels {
    fn load(cfg: &PipelineConfig, dir: &Path) -> Result<Self> {
        let mut lms = vec![NGramLanguageModel::read_arpa_path(&dir.join("target.arpa"))?];
        for i in 0..cfg.data.extra_lm.len() {
            lms.push(NGramLanguageModel::read_arpa_path(&dir.join(format!("extra-{i}.arpa")))?);
        }
        let class = if cfg.class_lm.enabled {
            Some((
                NGramLanguageModel::read_arpa_path(&dir.join("class.arpa"))?,
                WordClassMap::read_path(&dir.join("classes.txt"))?,
            ))
        } else {
            None
        };
        let src = dir.join("source.arpa");
        let source_lm = src.exists().then(|| NGramLanguageModel::read_arpa_path(&src)).transpose()?;
        Ok(TargetModels { lms, class, source_lm })
    }

    fn class_lm(&self) -> Option<ClassLm<'_>> {
        self.class.as_ref().map(|(lm, classes)| ClassLm { lm, classes })
    }
}

fn eval_set(pre: &Path, name: &str) -> Result<TuningSet> {
    Ok(TuningSet {
        inputs: textio::read_sentences(&pre.join(format!("{name}.input")))?,
        references: References::M2(read_m2_path(&pre.join(format!("{name}.m2")))?),
    })
}

/// Which iteration refinement selected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best_iteration: usize,
    pub model: ModelFiles,
    pub iterations: Vec<IterationSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub dev: Option<DevScore>,
}

fn stage_refine(cfg: &PipelineConfig, dirs: &StageDirs, fingerprint: &str, dir: &Path) -> Result<Vec<String>> {
    let source = textio::read_sentences(&dirs.preprocess.join("source.bpe"))?;
    let target = textio::read_sentences(&dirs.preprocess.join("target.bpe"))?;
    let models = TargetModels::load(cfg, &dirs.lm)?;
    let prep = Preprocessing::load(&dirs.preprocess)?;
    let tuning = eval_set(&dirs.preprocess, "tune")?;
    let dev = eval_set(&dirs.preprocess, "dev")?;
    let t2s = dirs.induction.join("t2s.phrases");
    let init = InitialTables {
        source_to_target: Some(PhraseTable::read_path(&dirs.induction.join("s2t.phrases"))?),
        target_to_source: t2s.exists().then(|| PhraseTable::read_path(&t2s)).transpose()?,
    };
    let inputs = RefinementInputs {
        source_corpus: &source,
        target_corpus: &target,
        target_lms: models.lms.iter().collect(),
        class_lm: models.class_lm(),
        source_lm: models.source_lm.as_ref(),
        bpe: prep.bpe.as_ref(),
        tuning: &tuning,
        dev: &dev,
        fingerprint: fingerprint.to_owned(),
    };
    let plan = RefinementPlan {
        config: cfg.refinement_config(),
        workspace: dir.to_owned(),
    };
    let outcome = run_refinement(&plan, &inputs, &init)?;
    let best = outcome.best();
    let model = best.source_to_target.clone().expect("selected iterations are scored, so they have s2t");
    let rel = |p: &Path| p.strip_prefix(dir).expect("inside the stage directory").to_owned();
    let selection = Selection {
        best_iteration: best.iteration,
        model: ModelFiles {
            table: rel(&model.table),
            weights: rel(&model.weights),
        },
        iterations: outcome
            .iterations
            .iter()
            .map(|a| IterationSummary {
                iteration: a.iteration,
                dev: a.dev.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&selection).expect("selection serializes");
    textio::write_atomic(&dir.join("selection.json"), |w| w.write_all(json.as_bytes()))?;
    let mut files = vec!["selection.json".to_owned()];
    for a in &outcome.iterations {
        for rec in a.manifest.files.values() {
            files.push(rel(&a.dir.join(&rec.path)).to_string_lossy().into_owned());
        }
        files.push(rel(&a.dir.join("manifest.json")).to_string_lossy().into_owned());
    }
    Ok(files)
}

fn stage_wordlist(cfg: &PipelineConfig, pre: &Path, dir: &Path) -> Result<Vec<String>> {
    let target = textio::read_sentences(&pre.join("target.tok"))?;
    build_wordlist(&target, cfg.spellcheck.min_frequency).write_path(&dir.join("wordlist.txt"))?;
    Ok(vec!["wordlist.txt".into()])
}

struct StageDirs {
    preprocess: PathBuf,
    embeddings: PathBuf,
    mapping: PathBuf,
    induction: PathBuf,
    lm: PathBuf,
}

/// Manifests of every training stage, in order.
pub struct TrainedStages {
    pub manifests: Vec<StageManifest>,
    /// Stages that were skipped because they were up to date.
    pub skipped: Vec<String>,
}

/// Runs (or reuses) every stage up to the trained, refined system and the
/// spell checker's word list.
pub fn train_all(cfg: &PipelineConfig, ws: &Workspace) -> Result<TrainedStages> {
    let dirs = StageDirs {
        preprocess: ws.stage_dir("preprocess"),
        embeddings: ws.stage_dir("embeddings"),
        mapping: ws.stage_dir("mapping"),
        induction: ws.stage_dir("induction"),
        lm: ws.stage_dir("lm"),
    };
    let mut skipped = Vec::new();
    let mut note = |name: &str, (m, skip): (StageManifest, bool)| -> StageManifest {
        if skip {
            skipped.push(name.to_owned());
        }
        m
    };

    let d = &cfg.data;
    let mut data_files: Vec<&PathBuf> = vec![&d.source, &d.target, &d.tuning, &d.dev];
    data_files.extend(d.extra_lm.iter());
    data_files.extend(d.test.iter());
    let data_hashes = file_hashes(&data_files)?;
    let pre_fp = fingerprint("preprocess", &(&cfg.preprocess, d.extra_lm.len(), d.test.is_some(), &data_hashes), &[]);
    let pre = note("preprocess", ws.run("preprocess", pre_fp, |dir| stage_preprocess(cfg, dir))?);

    let emb_fp = fingerprint("embeddings", &(&cfg.embeddings, cfg.seed), &[&pre]);
    let emb = note("embeddings", ws.run("embeddings", emb_fp, |dir| stage_embeddings(cfg, &dirs.preprocess, dir))?);

    let map_fp = fingerprint("mapping", &(&cfg.mapping, cfg.seed), &[&emb]);
    let map = note("mapping", ws.run("mapping", map_fp, |dir| stage_mapping(cfg, &dirs.embeddings, dir))?);

    let ind_fp = fingerprint("induction", &(&cfg.induction, cfg.refinement.mode), &[&map]);
    let ind = note("induction", ws.run("induction", ind_fp, |dir| stage_induction(cfg, &dirs.mapping, dir))?);

    let lm_fp = fingerprint("lm", &(&cfg.lm, &cfg.class_lm, cfg.refinement.mode, cfg.seed), &[&pre, &emb]);
    let lm = note("lm", ws.run("lm", lm_fp, |dir| stage_lm(cfg, &dirs.preprocess, &dirs.embeddings, dir))?);

    let ref_fp = fingerprint("refine", &cfg.refinement_config(), &[&pre, &ind, &lm]);
    let fp = ref_fp.clone();
    let refine = note("refine", ws.run("refine", ref_fp, |dir| stage_refine(cfg, &dirs, &fp, dir))?);

    let wl_fp = fingerprint("wordlist", &cfg.spellcheck, &[&pre]);
    let wl = note("wordlist", ws.run("wordlist", wl_fp, |dir| stage_wordlist(cfg, &dirs.preprocess, dir))?);
    drop(note);
    Ok(TrainedStages {
        manifests: vec![pre, emb, map, ind, lm, refine, wl],
        skipped,
    })
}

/// The selected system, ready to correct preprocessed text.
pub struct Corrector {
    prep: Preprocessing,
    models: TargetModels,
    table: PhraseTable,
    weights: Weights,
    wordlist: Option<WordList>,
    decoder: DecoderConfig,
    pub selection: Selection,
}

impl Corrector {
    pub fn load(cfg: &PipelineConfig, ws: &Workspace) -> Result<Self> {
        let refine = ws.stage_dir("refine");
        let path = refine.join("selection.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let selection: Selection = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let wl = ws.stage_dir("wordlist").join("wordlist.txt");
        Ok(Corrector {
            prep: Preprocessing::load(&ws.stage_dir("preprocess"))?,
            models: TargetModels::load(cfg, &ws.stage_dir("lm"))?,
            table: PhraseTable::read_path(&refine.join(&selection.model.table))?,
            weights: Weights::read_path(&refine.join(&selection.model.weights))?,
            wordlist: if cfg.spellcheck.enabled { Some(WordList::read_path(&wl)?) } else { None },
            decoder: cfg.decoder.clone(),
            selection,
        })
    }

    /// Truecasing of raw tokenized input.
    pub fn truecase(&self, s: &Sentence) -> Sentence {
        self.prep.truecase(s)
    }

    pub fn truecase_m2(&self, s: &M2Sentence) -> M2Sentence {
        self.prep.truecase_m2(s)
    }

    /// Decodes truecased word-level sentences.
    pub fn decode(&self, sentences: &[Sentence]) -> Result<Vec<Sentence>> {
        let inputs: Vec<Sentence> = sentences.iter().map(|s| self.prep.segment(s)).collect();
        let decoder = Decoder::new(
            &self.table,
            self.models.lms.iter().collect(),
            self.models.class_lm(),
            self.decoder.clone(),
        );
        Ok(decoder.decode_corpus(&self.weights, &inputs)?.into_iter().map(|t| t.tokens).collect())
    }

    pub fn spellcheck(&self, sentences: &[Sentence]) -> Vec<Sentence> {
        match &self.wordlist {
            Some(wl) => correct_corpus(sentences, wl),
            None => sentences.to_vec(),
        }
    }

    /// Spell checking, then decoding.
    pub fn correct(&self, sentences: &[Sentence]) -> Result<Vec<Sentence>> {
        self.decode(&self.spellcheck(sentences))
    }
}

/// One evaluated system output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub score: DevScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub best_iteration: usize,
    pub iterations: Vec<IterationSummary>,
    pub dev: EvalRow,
    pub test: Option<EvalRow>,
}

fn metric_line(score: &DevScore) -> String {
    match &score.report {
        Some(r) => format!("{r}  {} {:.4}  corrections {}", score.objective, score.value, score.corrections),
        None => format!("{} {:.4}  corrections {}", score.objective, score.value, score.corrections),
    }
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for it in &self.iterations {
            match &it.dev {
                Some(d) => {
                    let _ = writeln!(out, "iteration {}: {}", it.iteration, metric_line(d));
                }
                None => {
                    let _ = writeln!(out, "iteration {}: not scored", it.iteration);
                }
            }
        }
        let _ = writeln!(out, "selected iteration {}", self.best_iteration);
        let _ = writeln!(out, "dev  {}", metric_line(&self.dev.score));
        if let Some(t) = &self.test {
            let _ = writeln!(out, "test {}", metric_line(&t.score));
        }
        out
    }
}

fn evaluate_set(cfg: &PipelineConfig, c: &Corrector, gold_path: &Path, name: &str) -> Result<(EvalRow, Vec<Sentence>)> {
    let gold = read_m2_path(gold_path)?;
    let set = TuningSet::from_m2(gold);
    let hyps = c.correct(&set.inputs)?;
    let score = score_dev(&set, &hyps, cfg.tuning.objective, &cfg.tuning.max_match, &cfg.gleu)?;
    Ok((
        EvalRow {
            name: name.to_owned(),
            score,
        },
        hyps,
    ))
}

/// Runs every stage and evaluates spell checking followed by the selected
/// SMT system on the dev (and test) set. Scores are computed on truecased
/// text against truecased gold edits; the written hypotheses are
/// detruecased.
pub fn run_pipeline(cfg: &PipelineConfig, ws: &Workspace) -> Result<PipelineReport> {
    let trained = train_all(cfg, ws)?;
    let eval_fp = fingerprint("evaluate", &(&cfg.tuning, &cfg.gleu, &cfg.decoder), &trained.manifests.iter().collect::<Vec<_>>());
    let pre = ws.stage_dir("preprocess");
    let mut report = None;
    ws.run("evaluate", eval_fp, |dir| {
        let c = Corrector::load(cfg, ws)?;
        let (dev, dev_hyps) = evaluate_set(cfg, &c, &pre.join("dev.m2"), "dev")?;
        textio::write_sentences(&dir.join("dev.hyp"), dev_hyps.iter().map(crate::corpus::detruecase).collect::<Vec<_>>().iter())?;
        let mut files = vec!["dev.hyp".to_owned()];
        let test = if cfg.data.test.is_some() {
            let (t, hyps) = evaluate_set(cfg, &c, &pre.join("test.m2"), "test")?;
            textio::write_sentences(&dir.join("test.hyp"), hyps.iter().map(crate::corpus::detruecase).collect::<Vec<_>>().iter())?;
            files.push("test.hyp".into());
            Some(t)
        } else {
            None
        };
        let r = PipelineReport {
            best_iteration: c.selection.best_iteration,
            iterations: c.selection.iterations.clone(),
            dev,
            test,
        };
        let json = serde_json::to_string_pretty(&r).expect("report serializes");
        textio::write_atomic(&dir.join("report.json"), |w| {
            w.write_all(json.as_bytes())?;
            w.write_all(b"\n")
        })?;
        let text = r.to_text();
        textio::write_atomic(&dir.join("report.txt"), |w| w.write_all(text.as_bytes()))?;
        files.extend(["report.json".into(), "report.txt".into()]);
        report = Some(r);
        Ok(files)
    })?;
    match report {
        Some(r) => Ok(r),
        None => read_report(ws),
    }
}

/// The report of a finished run.
pub fn read_report(ws: &Workspace) -> Result<PipelineReport> {
    let path = ws.stage_dir("evaluate").join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub rows: Vec<EvalRow>,
}

impl OrderReport {
    pub fn row(&self, name: &str) -> Option<&DevScore> {
        self.rows.iter().find(|r| r.name == name).map(|r| &r.score)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(out, "{:<16} {}", r.name, metric_line(&r.score));
        }
        out
    }
}

pub const ORDER_ROWS: [&str; 4] = ["spell -> SMT", "SMT -> spell", "SMT only", "spell only"];

/// Compares the orderings of spell checking and SMT on an M² set (the
/// configured dev set unless `dev` is given). Trains whatever is missing.
pub fn order_experiment(cfg: &PipelineConfig, ws: &Workspace, dev: Option<&Path>) -> Result<OrderReport> {
    train_all(cfg, ws)?;
    let c = Corrector::load(cfg, ws)?;
    let gold: Vec<M2Sentence> = match dev {
        Some(p) => read_m2_path(p)?.iter().map(|s| c.truecase_m2(s)).collect(),
        None => read_m2_path(&ws.stage_dir("preprocess").join("dev.m2"))?,
    };
    let set = TuningSet::from_m2(gold);
    if c.wordlist.is_none() {
        return Err(Error::Config("the order experiment needs spellcheck.enabled".into()));
    }
    let spelled = c.spellcheck(&set.inputs);
    let smt = c.decode(&set.inputs)?;
    let outputs = [c.decode(&spelled)?, c.spellcheck(&smt), smt, spelled];
    let mut rows = Vec::new();
    for (name, hyps) in ORDER_ROWS.iter().zip(outputs.iter()) {
        let score = score_dev(&set, hyps, cfg.tuning.objective, &cfg.tuning.max_match, &cfg.gleu)?;
        rows.push(EvalRow {
            name: (*name).to_owned(),
            score,
        });
    }
    let report = OrderReport { rows };
    let dir = ws.stage_dir("order-experiment");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    textio::write_atomic(&dir.join("report.json"), |w| w.write_all(json.as_bytes()))?;
    let text = report.to_text();
    textio::write_atomic(&dir.join("report.txt"), |w| w.write_all(text.as_bytes()))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_settings() {
        let c = PipelineConfig::default();
        assert_eq!(c.embeddings.dim, 300);
        assert_eq!((c.embeddings.unigram_cutoff, c.embeddings.bigram_cutoff, c.embeddings.trigram_cutoff), (200_000, 400_000, 400_000));
        assert_eq!(c.induction.neighbor_limit, 100);
        assert_eq!(c.induction.epsilon, 0.001);
        assert_eq!((c.lm.order, c.class_lm.order, c.class_lm.classes), (5, 9, 200));
        assert_eq!(c.preprocess.bpe_operations, 50_000);
        assert_eq!(c.spellcheck.min_frequency, 5);
        assert_eq!(c.refinement.iterations, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::parse("seed = 3\n[decoder]\nbeam = 5\n").is_ok());
        let err = PipelineConfig::parse("[decoder]\nbeem = 5\n").unwrap_err();
        assert!(err.to_string().contains("decoder.beem"), "{err}");
        assert!(PipelineConfig::parse("[induction]\ntau = 0.1\n[data]\ntest = \"x.m2\"\n").is_ok());
    }

    #[test]
    fn missing_target_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["s.txt", "t.m2", "d.m2"] {
            fs::write(dir.path().join(f), "x\n").unwrap();
        }
        let mut cfg = PipelineConfig::parse("[data]\nsource = \"s.txt\"\ntuning = \"t.m2\"\ndev = \"d.m2\"\n").unwrap();
        cfg.resolve(dir.path());
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("data.target"), "{err}");
    }

    #[test]
    fn truecasing_gold_keeps_edit_spans() {
        let mut counts = String::new();
        for _ in 0..3 {
            counts.push_str("so a dog barks .\n");
        }
        let model = train_truecaser(&counts.lines().map(Sentence::from_line).collect::<Vec<_>>()).unwrap();
        let gold = crate::metrics::read_m2("S A dog bark .\nA 2 3|||R:VERB:SVA|||barks|||REQUIRED|||-NONE-|||0\nA 0 1|||R:DET|||The|||REQUIRED|||-NONE-|||0\n\n".as_bytes()).unwrap();
        let tc = truecase_m2(&model, &gold[0]);
        assert_eq!(tc.source.to_string(), "a dog bark .");
        assert_eq!(tc.gold(0)[0].replacement, vec!["barks"]);
        assert_eq!(tc.gold(0)[1].replacement, vec!["The"]);
    }
}
