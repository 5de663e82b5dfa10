//! Iterative refinement of the induced system by forward translation or
//! back-translation.
//!
//! Every iteration lives in its own workspace directory holding the phrase
//! tables, tuned weights, synthetic corpora, dev output and a
//! `manifest.json`. A manifest whose fingerprint matches the current inputs
//! marks the iteration as done, so interrupted runs resume where they
//! stopped.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alignment::{estimate_refined_table, train_symmetric, AlignerConfig, DEFAULT_MAX_PHRASE_LEN};
use crate::corpus::{length_filter_pairs, BpeModel, LengthBounds, Sentence};
use crate::decoder::{ClassLm, Decoder, DecoderConfig, Weights};
use crate::error::{Error, Result};
use crate::lm::NGramLanguageModel;
use crate::metrics::{extract_system_edits, gleu, m2_score, GleuConfig, MaxMatchConfig, MetricReport};
use crate::phrase_table::PhraseTable;
use crate::textio::{self, derive_seed, sha256_file, HashWriter};
use crate::tuning::{tune, Objective, References, TuningConfig, TuningSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forward,
    Backward,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Mode::Forward),
            "backward" => Ok(Mode::Backward),
            _ => Err(Error::InvalidArgument(format!("unknown refinement mode {s:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Forward => "forward",
            Mode::Backward => "backward",
        })
    }
}

/// Translation direction: learner-side source to clean target, or back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SourceToTarget,
    TargetToSource,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::SourceToTarget => "s2t",
            Direction::TargetToSource => "t2s",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub mode: Mode,
    pub iterations: usize,
    /// Beam used when generating synthetic corpora.
    pub synthetic_beam: usize,
    pub max_phrase_len: usize,
    /// Start every tuning run from default weights instead of the previous
    /// iteration's.
    pub reset_weights: bool,
    pub aligner: AlignerConfig,
    pub decoder: DecoderConfig,
    pub tuning: TuningConfig,
    pub gleu: GleuConfig,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            mode: Mode::Forward,
            iterations: 3,
            synthetic_beam: 20,
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
            reset_weights: false,
            aligner: AlignerConfig::default(),
            decoder: DecoderConfig::default(),
            tuning: TuningConfig::default(),
            gleu: GleuConfig::default(),
        }
    }
}

/// What to run and where to put it.
#[derive(Clone, Debug)]
pub struct RefinementPlan {
    pub config: RefinementConfig,
    pub workspace: PathBuf,
}

/// Corpora, language models and evaluation data shared by all iterations.
pub struct RefinementInputs<'a> {
    /// `C_s`: the noisy side of the comparable corpus.
    pub source_corpus: &'a [Sentence],
    /// `C_t`: the clean side.
    pub target_corpus: &'a [Sentence],
    pub target_lms: Vec<&'a NGramLanguageModel>,
    pub class_lm: Option<ClassLm<'a>>,
    pub source_lm: Option<&'a NGramLanguageModel>,
    /// Subword model of the corpora. Decoder output is word level, so
    /// synthetic corpora and reversed tuning inputs are re-segmented.
    pub bpe: Option<&'a BpeModel>,
    /// Decoder-ready inputs with word-level references.
    pub tuning: &'a TuningSet,
    pub dev: &'a TuningSet,
    /// Identifies the inputs; finished iterations are reused only when
    /// their manifest carries the same fingerprint.
    pub fingerprint: String,
}

impl RefinementInputs<'_> {
    /// Fingerprint over the full content of every input.
    pub fn content_fingerprint(&self) -> String {
        let mut h = HashWriter::new();
        let mut put = |label: &str, value: String| {
            use std::io::Write;
            writeln!(h, "{label}\t{value}").expect("hashing cannot fail");
        };
        put("c_s", textio::sha256_sentences(self.source_corpus));
        put("c_t", textio::sha256_sentences(self.target_corpus));
        for (i, lm) in self.target_lms.iter().enumerate() {
            put(&format!("lm_t{i}"), lm_hash(lm));
        }
        if let Some(c) = &self.class_lm {
            put("class_lm", lm_hash(c.lm));
            let mut m = HashWriter::new();
            c.classes.write(&mut m).expect("hashing cannot fail");
            put("classes", m.finish());
        }
        if let Some(lm) = self.source_lm {
            put("lm_s", lm_hash(lm));
        }
        if let Some(b) = self.bpe {
            let mut m = HashWriter::new();
            b.write(&mut m).expect("hashing cannot fail");
            put("bpe", m.finish());
        }
        put("tuning", tuning_set_hash(self.tuning));
        put("dev", tuning_set_hash(self.dev));
        drop(put);
        h.finish()
    }

    fn segment(&self, sentences: Vec<Sentence>) -> Vec<Sentence> {
        match self.bpe {
            Some(b) => sentences.iter().map(|s| b.apply(s)).collect(),
            None => sentences,
        }
    }

    fn validate(&self, mode: Mode) -> Result<()> {
        if self.target_lms.is_empty() {
            return Err(Error::Config("refinement needs a target-side language model".into()));
        }
        if mode == Mode::Backward && self.source_lm.is_none() {
            return Err(Error::Config("backward refinement needs a source-side language model".into()));
        }
        if self.source_corpus.is_empty() || (mode == Mode::Backward && self.target_corpus.is_empty()) {
            return Err(Error::InsufficientData("refinement corpus is empty".into()));
        }
        Ok(())
    }
}

fn lm_hash(lm: &NGramLanguageModel) -> String {
    let mut h = HashWriter::new();
    lm.write_arpa(&mut h).expect("hashing cannot fail");
    h.finish()
}

fn tuning_set_hash(set: &TuningSet) -> String {
    let mut h = HashWriter::new();
    match &set.references {
        References::M2(gold) => crate::metrics::write_m2(&mut h, gold).expect("hashing cannot fail"),
        References::Gleu { sources, references } => {
            use std::io::Write;
            for (s, refs) in sources.iter().zip(references) {
                writeln!(h, "{s}").expect("hashing cannot fail");
                for r in refs {
                    writeln!(h, "\t{r}").expect("hashing cannot fail");
                }
            }
        }
    }
    let inputs = textio::sha256_sentences(&set.inputs);
    format!("{}:{inputs}", h.finish())
}

/// Dev-set result of one system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevScore {
    pub objective: Objective,
    /// Objective value in `[0, 1]`.
    pub value: f64,
    /// M² counts when the dev set carries edit annotations.
    pub report: Option<MetricReport>,
    /// Edits the system made, counted as minimal token-level changes.
    pub corrections: usize,
    pub changed_sentences: usize,
}

/// Scores system output on an evaluation set.
pub fn score_dev(
    set: &TuningSet,
    hypotheses: &[Sentence],
    objective: Objective,
    mm: &MaxMatchConfig,
    gleu_cfg: &GleuConfig,
) -> Result<DevScore> {
    if hypotheses.len() != set.inputs.len() {
        return Err(Error::Mismatch(format!(
            "{} dev inputs but {} hypotheses",
            set.inputs.len(),
            hypotheses.len()
        )));
    }
    let corrections = set
        .inputs
        .iter()
        .zip(hypotheses)
        .map(|(s, h)| extract_system_edits(s.tokens(), h.tokens(), &[], mm).len())
        .sum();
    let changed_sentences = set.inputs.iter().zip(hypotheses).filter(|(s, h)| s != h).count();
    let (report, gleu_corpus) = match &set.references {
        References::M2(gold) => {
            let (report, _) = m2_score(gold, hypotheses, mm)?;
            let corpus = gold
                .iter()
                .zip(hypotheses)
                .map(|(g, h)| {
                    let refs = g
                        .annotator_ids()
                        .into_iter()
                        .map(|id| Sentence::from_line(&crate::metrics::apply_edits(g.source.tokens(), &g.gold(id)).join(" ")))
                        .collect();
                    (g.source.clone(), h.clone(), refs)
                })
                .collect::<Vec<_>>();
            (Some(report), corpus)
        }
        References::Gleu { sources, references } => (
            None,
            sources
                .iter()
                .zip(hypotheses)
                .zip(references)
                .map(|((s, h), r)| (s.clone(), h.clone(), r.clone()))
                .collect(),
        ),
    };
    let value = match (objective, &report) {
        (Objective::M2F05, Some(r)) => r.f05,
        (Objective::M2F05, None) => return Err(Error::Config("the M² objective needs an M² dev set".into())),
        (Objective::Gleu, _) => gleu(&gleu_corpus, gleu_cfg)?,
    };
    Ok(DevScore {
        objective,
        value,
        report,
        corrections,
        changed_sentences,
    })
}

/// Files of one trained direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFiles {
    pub table: PathBuf,
    pub weights: PathBuf,
}

impl ModelFiles {
    pub fn load(&self) -> Result<(PhraseTable, Weights)> {
        Ok((PhraseTable::read_path(&self.table)?, Weights::read_path(&self.weights)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the iteration directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningSummary {
    pub objective: f64,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub iteration: usize,
    pub mode: Mode,
    pub fingerprint: String,
    pub files: BTreeMap<String, FileRecord>,
    pub tuning: BTreeMap<String, TuningSummary>,
    /// Synthetic pairs kept after length filtering, per trained direction.
    pub synthetic_pairs: BTreeMap<String, usize>,
    pub dev: Option<DevScore>,
}

/// Outputs of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationArtifacts {
    pub iteration: usize,
    pub dir: PathBuf,
    pub source_to_target: Option<ModelFiles>,
    pub target_to_source: Option<ModelFiles>,
    pub dev: Option<DevScore>,
    pub manifest: Manifest,
}

impl IterationArtifacts {
    fn from_manifest(dir: &Path, manifest: Manifest) -> Self {
        let model = |d: Direction| {
            let t = manifest.files.get(&format!("{}.table", d.tag()))?;
            let w = manifest.files.get(&format!("{}.weights", d.tag()))?;
            Some(ModelFiles {
                table: dir.join(&t.path),
                weights: dir.join(&w.path),
            })
        };
        IterationArtifacts {
            iteration: manifest.iteration,
            dir: dir.to_owned(),
            source_to_target: model(Direction::SourceToTarget),
            target_to_source: model(Direction::TargetToSource),
            dev: manifest.dev.clone(),
            manifest,
        }
    }

    /// Reads the manifest of an iteration directory and checks every
    /// recorded file against its hash.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for rec in manifest.files.values() {
            let p = dir.join(&rec.path);
            if sha256_file(&p)? != rec.sha256 {
                return Err(Error::Config(format!("{} does not match its manifest hash", p.display())));
            }
        }
        Ok(Self::from_manifest(dir, manifest))
    }
}

const MANIFEST: &str = "manifest.json";

pub fn iteration_dir(workspace: &Path, iteration: usize) -> PathBuf {
    workspace.join(format!("iter-{iteration:02}"))
}

/// Collects an iteration's files and writes its manifest last.
struct IterationWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl IterationWriter {
    fn new(dir: PathBuf, iteration: usize, mode: Mode, fingerprint: String) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        // a stale manifest must not survive a partial rewrite
        let stale = dir.join(MANIFEST);
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
        Ok(IterationWriter {
            dir,
            manifest: Manifest {
                iteration,
                mode,
                fingerprint,
                files: BTreeMap::new(),
                tuning: BTreeMap::new(),
                synthetic_pairs: BTreeMap::new(),
                dev: None,
            },
        })
    }

    fn record(&mut self, key: &str, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.manifest.files.insert(
            key.to_owned(),
            FileRecord {
                path: name.to_owned(),
                sha256: sha256_file(&path)?,
            },
        );
        Ok(path)
    }

    fn model(&mut self, d: Direction, table: &PhraseTable, weights: &Weights) -> Result<()> {
        let tag = d.tag();
        table.write_path(&self.dir.join(format!("{tag}.phrases")))?;
        weights.write_path(&self.dir.join(format!("{tag}.weights")))?;
        self.record(&format!("{tag}.table"), &format!("{tag}.phrases"))?;
        self.record(&format!("{tag}.weights"), &format!("{tag}.weights"))?;
        Ok(())
    }

    fn sentences(&mut self, key: &str, name: &str, s: &[Sentence]) -> Result<()> {
        textio::write_sentences(&self.dir.join(name), s)?;
        self.record(key, name)?;
        Ok(())
    }

    fn finish(self) -> Result<IterationArtifacts> {
        let path = self.dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        textio::write_atomic(&path, |w| {
            w.write_all(json.as_bytes())?;
            w.write_all(b"\n")
        })?;
        Ok(IterationArtifacts::from_manifest(&self.dir, self.manifest))
    }
}

impl RefinementPlan {
    fn fingerprint(&self, inputs: &RefinementInputs, iteration: usize, prev: Option<&IterationArtifacts>) -> String {
        let mut h = HashWriter::new();
        use std::io::Write;
        let cfg = serde_json::to_string(&self.config).expect("config serializes");
        // the iteration count only bounds the loop; it does not change any iteration
        let cfg = cfg.replace(&format!("\"iterations\":{}", self.config.iterations), "");
        writeln!(h, "{cfg}\n{}\n{iteration}", inputs.fingerprint).expect("hashing cannot fail");
        if let Some(p) = prev {
            writeln!(h, "{}", p.manifest.fingerprint).expect("hashing cannot fail");
            for (k, rec) in &p.manifest.files {
                writeln!(h, "{k}\t{}", rec.sha256).expect("hashing cannot fail");
            }
        }
        h.finish()
    }

    /// The finished iteration in `dir` if its manifest matches.
    fn reuse(&self, iteration: usize, fingerprint: &str) -> Option<IterationArtifacts> {
        let dir = iteration_dir(&self.workspace, iteration);
        let a = IterationArtifacts::load(&dir).ok()?;
        (a.manifest.fingerprint == fingerprint).then(|| {
            log::info!("iteration {iteration}: reusing {}", dir.display());
            a
        })
    }

    fn tuning_config(&self, iteration: usize, d: Direction) -> TuningConfig {
        TuningConfig {
            seed: derive_seed(self.config.tuning.seed, &format!("refine/{iteration}/{}", d.tag())),
            ..self.config.tuning.clone()
        }
    }
}

/// Models of one direction with its language models.
struct System<'a> {
    direction: Direction,
    lms: Vec<&'a NGramLanguageModel>,
    class_lm: Option<ClassLm<'a>>,
}

impl<'a> System<'a> {
    fn of(d: Direction, inputs: &RefinementInputs<'a>) -> Self {
        match d {
            Direction::SourceToTarget => System {
                direction: d,
                lms: inputs.target_lms.clone(),
                class_lm: inputs.class_lm,
            },
            Direction::TargetToSource => System {
                direction: d,
                lms: inputs.source_lm.into_iter().collect(),
                class_lm: None,
            },
        }
    }

    fn decoder<'t>(&self, table: &'t PhraseTable, cfg: DecoderConfig) -> Decoder<'t>
    where
        'a: 't,
    {
        Decoder::new(table, self.lms.clone(), self.class_lm, cfg)
    }

    fn tuning_set(&self, inputs: &RefinementInputs) -> TuningSet {
        match self.direction {
            Direction::SourceToTarget => inputs.tuning.clone(),
            Direction::TargetToSource => {
                let mut set = inputs.tuning.reversed();
                set.inputs = inputs.segment(set.inputs);
                set
            }
        }
    }

    fn tune(
        &self,
        plan: &RefinementPlan,
        inputs: &RefinementInputs,
        table: &PhraseTable,
        init: Option<Weights>,
        iteration: usize,
        out: &mut IterationWriter,
    ) -> Result<Weights> {
        let decoder = self.decoder(table, plan.config.decoder.clone());
        let start = match init {
            Some(w) if !plan.config.reset_weights => w.aligned_to(decoder.layout())?,
            _ => decoder.layout().default_weights(),
        };
        let cfg = plan.tuning_config(iteration, self.direction);
        let outcome = tune(&decoder, &self.tuning_set(inputs), &start, &cfg)?;
        log::info!(
            "iteration {iteration} {}: tuned {} = {:.4}",
            self.direction.tag(),
            cfg.objective,
            outcome.objective
        );
        out.manifest.tuning.insert(
            self.direction.tag().to_owned(),
            TuningSummary {
                objective: outcome.objective,
                inner_iterations: outcome.history.len(),
            },
        );
        Ok(outcome.weights)
    }

    /// Synthetic corpus, segmented like the training corpora.
    fn translate(
        &self,
        plan: &RefinementPlan,
        inputs: &RefinementInputs,
        table: &PhraseTable,
        weights: &Weights,
        corpus: &[Sentence],
    ) -> Result<Vec<Sentence>> {
        let cfg = DecoderConfig {
            beam: plan.config.synthetic_beam,
            ..plan.config.decoder.clone()
        };
        let out = self
            .decoder(table, cfg)
            .decode_corpus(weights, corpus)?
            .into_iter()
            .map(|t| t.tokens)
            .collect();
        Ok(inputs.segment(out))
    }
}

/// Phrase table trained on `(source, target)` pairs that pass the length
/// filter.
fn train_table(plan: &RefinementPlan, source: &[Sentence], target: &[Sentence]) -> Result<(PhraseTable, usize)> {
    let pairs: Vec<(Sentence, Sentence)> = length_filter_pairs(
        source.iter().cloned().zip(target.iter().cloned()),
        LengthBounds::PAIR,
    )
    .collect();
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no synthetic pair passes the length filter".into()));
    }
    let aligner = train_symmetric(&pairs, &plan.config.aligner)?;
    Ok((estimate_refined_table(&pairs, &aligner, plan.config.max_phrase_len), pairs.len()))
}

fn evaluate(
    plan: &RefinementPlan,
    inputs: &RefinementInputs,
    table: &PhraseTable,
    weights: &Weights,
    out: &mut IterationWriter,
) -> Result<()> {
    let system = System::of(Direction::SourceToTarget, inputs);
    let hyps: Vec<Sentence> = system
        .decoder(table, plan.config.decoder.clone())
        .decode_corpus(weights, &inputs.dev.inputs)?
        .into_iter()
        .map(|t| t.tokens)
        .collect();
    out.sentences("dev.hyp", "dev.hyp", &hyps)?;
    let score = score_dev(
        inputs.dev,
        &hyps,
        plan.config.tuning.objective,
        &plan.config.tuning.max_match,
        &plan.config.gleu,
    )?;
    log::info!(
        "iteration {}: dev {} = {:.4}, {} corrections",
        out.manifest.iteration,
        score.objective,
        score.value,
        score.corrections
    );
    out.manifest.dev = Some(score);
    Ok(())
}

/// Initial tables induced from the mapped embeddings.
#[derive(Clone, Debug, Default)]
pub struct InitialTables {
    pub source_to_target: Option<PhraseTable>,
    pub target_to_source: Option<PhraseTable>,
}

/// Iteration 0: tunes the induced table(s). Forward mode needs the s→t
/// table; backward mode needs the t→s table, and the s→t table when given
/// is tuned and scored too so that iteration 0 has a dev score.
pub fn initialize(plan: &RefinementPlan, inputs: &RefinementInputs, init: &InitialTables) -> Result<IterationArtifacts> {
    let mode = plan.config.mode;
    inputs.validate(mode)?;
    let fp = plan.fingerprint(inputs, 0, None);
    if let Some(a) = plan.reuse(0, &fp) {
        return Ok(a);
    }
    let mut out = IterationWriter::new(iteration_dir(&plan.workspace, 0), 0, mode, fp)?;
    if mode == Mode::Backward {
        let table = init
            .target_to_source
            .as_ref()
            .ok_or_else(|| Error::Config("backward refinement needs an initial target-to-source table".into()))?;
        let system = System::of(Direction::TargetToSource, inputs);
        let w = system.tune(plan, inputs, table, None, 0, &mut out)?;
        out.model(Direction::TargetToSource, table, &w)?;
    }
    match (&init.source_to_target, mode) {
        (Some(table), _) => {
            let system = System::of(Direction::SourceToTarget, inputs);
            let w = system.tune(plan, inputs, table, None, 0, &mut out)?;
            out.model(Direction::SourceToTarget, table, &w)?;
            evaluate(plan, inputs, table, &w, &mut out)?;
        }
        (None, Mode::Forward) => {
            return Err(Error::Config("forward refinement needs an initial source-to-target table".into()));
        }
        (None, Mode::Backward) => {}
    }
    out.finish()
}

fn prev_model(prev: &IterationArtifacts, d: Direction) -> Result<(PhraseTable, Weights)> {
    let files = match d {
        Direction::SourceToTarget => &prev.source_to_target,
        Direction::TargetToSource => &prev.target_to_source,
    };
    files
        .as_ref()
        .ok_or_else(|| Error::Config(format!("iteration {} has no {} model", prev.iteration, d.tag())))?
        .load()
}

/// Decodes `C_s` with the previous s→t model and retrains s→t on the
/// result. `C_s` itself is never regenerated.
pub fn forward_iterate(plan: &RefinementPlan, inputs: &RefinementInputs, prev: &IterationArtifacts) -> Result<IterationArtifacts> {
    inputs.validate(Mode::Forward)?;
    let iteration = prev.iteration + 1;
    let fp = plan.fingerprint(inputs, iteration, Some(prev));
    if let Some(a) = plan.reuse(iteration, &fp) {
        return Ok(a);
    }
    let mut out = IterationWriter::new(iteration_dir(&plan.workspace, iteration), iteration, Mode::Forward, fp)?;
    let s2t = System::of(Direction::SourceToTarget, inputs);
    let (table, weights) = prev_model(prev, Direction::SourceToTarget)?;
    let synthetic_t = s2t.translate(plan, inputs, &table, &weights, inputs.source_corpus)?;
    out.sentences("synthetic.t", "synthetic.t", &synthetic_t)?;
    let (new_table, kept) = train_table(plan, inputs.source_corpus, &synthetic_t)?;
    out.manifest.synthetic_pairs.insert("s2t".into(), kept);
    let w = s2t.tune(plan, inputs, &new_table, Some(weights), iteration, &mut out)?;
    out.model(Direction::SourceToTarget, &new_table, &w)?;
    evaluate(plan, inputs, &new_table, &w, &mut out)?;
    out.finish()
}

/// One back-translation round: `C_t` is translated with the previous t→s
/// model to train a new s→t model, whose translation of `C_s` then trains
/// a new t→s model.
pub fn backward_iterate(plan: &RefinementPlan, inputs: &RefinementInputs, prev: &IterationArtifacts) -> Result<IterationArtifacts> {
    inputs.validate(Mode::Backward)?;
    let iteration = prev.iteration + 1;
    let fp = plan.fingerprint(inputs, iteration, Some(prev));
    if let Some(a) = plan.reuse(iteration, &fp) {
        return Ok(a);
    }
    let mut out = IterationWriter::new(iteration_dir(&plan.workspace, iteration), iteration, Mode::Backward, fp)?;
    let s2t = System::of(Direction::SourceToTarget, inputs);
    let t2s = System::of(Direction::TargetToSource, inputs);

    let (ts_table, ts_weights) = prev_model(prev, Direction::TargetToSource)?;
    let synthetic_s = t2s.translate(plan, inputs, &ts_table, &ts_weights, inputs.target_corpus)?;
    out.sentences("synthetic.s", "synthetic.s", &synthetic_s)?;
    let (st_table, kept) = train_table(plan, &synthetic_s, inputs.target_corpus)?;
    out.manifest.synthetic_pairs.insert("s2t".into(), kept);
    let st_init = prev_model(prev, Direction::SourceToTarget).ok().map(|m| m.1);
    let st_weights = s2t.tune(plan, inputs, &st_table, st_init, iteration, &mut out)?;
    out.model(Direction::SourceToTarget, &st_table, &st_weights)?;
    evaluate(plan, inputs, &st_table, &st_weights, &mut out)?;

    let synthetic_t = s2t.translate(plan, inputs, &st_table, &st_weights, inputs.source_corpus)?;
    out.sentences("synthetic.t", "synthetic.t", &synthetic_t)?;
    let (new_ts, kept) = train_table(plan, &synthetic_t, inputs.source_corpus)?;
    out.manifest.synthetic_pairs.insert("t2s".into(), kept);
    let ts_w = t2s.tune(plan, inputs, &new_ts, Some(ts_weights), iteration, &mut out)?;
    out.model(Direction::TargetToSource, &new_ts, &ts_w)?;
    out.finish()
}

/// Index of the best score; ties go to the earliest.
pub fn select_best_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// The scored iteration with the best dev score (ties: earliest).
pub fn select_best(artifacts: &[IterationArtifacts]) -> Option<&IterationArtifacts> {
    let scored: Vec<&IterationArtifacts> = artifacts.iter().filter(|a| a.dev.is_some()).collect();
    let values: Vec<f64> = scored.iter().map(|a| a.dev.as_ref().expect("filtered").value).collect();
    select_best_index(&values).map(|i| scored[i])
}

#[derive(Clone, Debug)]
pub struct RefinementOutcome {
    pub iterations: Vec<IterationArtifacts>,
    /// Index into `iterations` of the selected model.
    pub best: usize,
}

impl RefinementOutcome {
    pub fn best(&self) -> &IterationArtifacts {
        &self.iterations[self.best]
    }
}

/// Runs initialization and all iterations, reusing finished ones.
pub fn run_refinement(plan: &RefinementPlan, inputs: &RefinementInputs, init: &InitialTables) -> Result<RefinementOutcome> {
    if plan.config.iterations == 0 {
        return Err(Error::Config("refinement needs at least one iteration".into()));
    }
    let mut iterations = vec![initialize(plan, inputs, init)?];
    for _ in 0..plan.config.iterations {
        let prev = iterations.last().expect("nonempty");
        let next = match plan.config.mode {
            Mode::Forward => forward_iterate(plan, inputs, prev)?,
            Mode::Backward => backward_iterate(plan, inputs, prev)?,
        };
        iterations.push(next);
    }
    let best_ref = select_best(&iterations).ok_or_else(|| Error::InsufficientData("no iteration was scored".into()))?;
    let best = iterations.iter().position(|a| a.iteration == best_ref.iteration).expect("present");
    Ok(RefinementOutcome { iterations, best })
}
