use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use usmt_gec::alignment::{read_alignments_path, table_from_alignments, train_symmetric, write_alignments, AlignerConfig};
use usmt_gec::corpus::{learn_bpe, length_filter, tokenize, train_truecaser, BpeModel, LengthBounds, TruecaseModel};
use usmt_gec::decoder::{write_nbest, ClassLm, Decoder, DecoderConfig, Weights};
use usmt_gec::embeddings::{
    map_embeddings, normalize_embeddings, read_embeddings, train_ngram_embeddings, write_embeddings, MappingConfig,
    NGramCutoffs, NGramVocabulary, SeedInit, SkipGramConfig,
};
use usmt_gec::fixture::{make_toy_corpus, ToyConfig};
use usmt_gec::lm::{induce_classes, train_class_lm, train_lm, KMeansConfig, LmConfig, NGramLanguageModel, WordClassMap};
use usmt_gec::metrics::{gleu, m2_score, read_m2_path, GleuConfig, MaxMatchConfig};
use usmt_gec::phrase_table::{induce_table, InductionConfig, PhraseTable};
use usmt_gec::pipeline::{order_experiment, run_pipeline, train_all, PipelineConfig, Workspace};
use usmt_gec::refinement::Mode;
use usmt_gec::spellcheck::{build_wordlist, correct_sentence, WordList, DEFAULT_MIN_FREQUENCY};
use usmt_gec::textio::{self, derive_seed};
use usmt_gec::tuning::{tune, Objective, References, TuningConfig, TuningSet};
use usmt_gec::Sentence;

#[derive(Parser)]
#[command(name = "usmt-gec", version, about = "Unsupervised grammatical error correction with phrase-based SMT")]
struct Cli {
    /// Worker threads for parallel stages; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Src,
    Tgt,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Identical,
    Unsupervised,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    M2,
    Gleu,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefineMode {
    Forward,
    Backward,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, truecase, segment and length-filter text.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        tokenize: bool,
        #[arg(long)]
        truecase_model: Option<PathBuf>,
        #[arg(long)]
        bpe_model: Option<PathBuf>,
        #[arg(long, default_value_t = LengthBounds::MONO.min)]
        min_len: usize,
        #[arg(long, default_value_t = LengthBounds::MONO.max)]
        max_len: usize,
    },
    /// Learn a truecasing model from tokenized text.
    LearnTruecase {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Learn BPE merges from tokenized text.
    LearnBpe {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        operations: usize,
    },
    /// Train skip-gram embeddings of unigrams, bigrams and trigrams.
    TrainEmbeddings {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        side: Side,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 10)]
        negatives: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 200_000)]
        unigrams: usize,
        #[arg(long, default_value_t = 400_000)]
        bigrams: usize,
        #[arg(long, default_value_t = 400_000)]
        trigrams: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Map two embedding spaces into a shared space.
    MapEmbeddings {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        source_output: PathBuf,
        #[arg(long)]
        target_output: PathBuf,
        #[arg(long, value_enum, default_value = "identical")]
        init: Init,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Induce a phrase table from mapped embeddings.
    InduceTable {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Softmax temperature, or "auto" to estimate it.
        #[arg(long, default_value = "auto")]
        tau: String,
        #[arg(long, default_value_t = 100)]
        neighbors: usize,
        /// Induce the target-to-source table instead.
        #[arg(long)]
        backward: bool,
    },
    /// Train a modified Kneser-Ney language model.
    TrainLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        arpa: PathBuf,
        #[arg(long, default_value_t = 5)]
        order: usize,
    },
    /// Cluster words into classes and train a class language model.
    TrainClassLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        class_map: PathBuf,
        #[arg(long)]
        arpa: PathBuf,
        #[arg(long, default_value_t = 200)]
        classes: usize,
        #[arg(long, default_value_t = 9)]
        order: usize,
        #[arg(long, default_value_t = 20)]
        kmeans_iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Word-align a parallel corpus in both directions and symmetrize.
    Align {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        iters: usize,
    },
    /// Extract a relative-frequency phrase table from aligned text.
    Extract {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        max_phrase_len: usize,
    },
    /// Translate sentences with a phrase table and language models.
    Decode {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write this many hypotheses per sentence in n-best format.
        #[arg(long)]
        nbest: Option<usize>,
    },
    /// Tune log-linear weights with MERT against M2 F0.5 or GLEU.
    Tune {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "m2")]
        objective: Metric,
        /// M2 tuning set (for --objective m2).
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Source sentences (for --objective gleu).
        #[arg(long)]
        src: Option<PathBuf>,
        /// Reference files, one sentence per line each (for --objective gleu).
        #[arg(long, num_args = 1..)]
        refs: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        nbest: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run iterative refinement as configured, with optional overrides.
    Refine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<RefineMode>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Correct non-words against a word list.
    Spellcheck {
        #[arg(long)]
        wordlist: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Count words of a clean corpus into a spell-checking word list.
    BuildWordlist {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_FREQUENCY)]
        min_frequency: u64,
    },
    /// Score system output with M2 F0.5 or GLEU.
    Evaluate {
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        src: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        refs: Vec<PathBuf>,
    },
    /// Train every stage and evaluate on the dev (and test) set.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
    },
    /// Compare orderings of spell checking and SMT.
    OrderExperiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
        /// M2 set to score instead of the configured dev set.
        #[arg(long)]
        dev: Option<PathBuf>,
    },
    /// Write the synthetic toy corpus used by the tests.
    MakeToyCorpus {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2000)]
        sentences: usize,
        #[arg(long, default_value_t = 200)]
        tuning: usize,
        #[arg(long, default_value_t = 200)]
        dev: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Model files shared by `decode` and `tune`.
#[derive(clap::Args)]
struct ModelArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long = "lm", required = true)]
    lms: Vec<PathBuf>,
    #[arg(long, requires = "class_map")]
    class_lm: Option<PathBuf>,
    #[arg(long, requires = "class_lm")]
    class_map: Option<PathBuf>,
    /// Initial weights; defaults are used when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    beam: usize,
    #[arg(long, default_value_t = 20)]
    options: usize,
}

struct LoadedModel {
    table: PhraseTable,
    lms: Vec<NGramLanguageModel>,
    class: Option<(NGramLanguageModel, WordClassMap)>,
    weights: Option<Weights>,
    config: DecoderConfig,
}

impl ModelArgs {
    fn load(&self) -> Result<LoadedModel> {
        let lms = self
            .lms
            .iter()
            .map(|p| NGramLanguageModel::read_arpa_path(p).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<_>>()?;
        let class = match (&self.class_lm, &self.class_map) {
            (Some(lm), Some(map)) => Some((NGramLanguageModel::read_arpa_path(lm)?, WordClassMap::read_path(map)?)),
            _ => None,
        };
        Ok(LoadedModel {
            table: PhraseTable::read_path(&self.table)?,
            lms,
            class,
            weights: self.weights.as_deref().map(Weights::read_path).transpose()?,
            config: DecoderConfig {
                beam: self.beam,
                options_per_phrase: self.options,
                ..DecoderConfig::default()
            },
        })
    }
}

impl LoadedModel {
    fn decoder(&self) -> Decoder<'_> {
        let class = self.class.as_ref().map(|(lm, classes)| ClassLm { lm, classes });
        Decoder::new(&self.table, self.lms.iter().collect(), class, self.config.clone())
    }

    fn weights(&self, decoder: &Decoder<'_>) -> Result<Weights> {
        Ok(match &self.weights {
            Some(w) => w.aligned_to(decoder.layout())?,
            None => decoder.layout().default_weights(),
        })
    }
}

fn reader(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => textio::open_read(p)?,
        None => Box::new(BufReader::new(io::stdin().lock())),
    })
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_lines(path: Option<&Path>) -> Result<Vec<String>> {
    reader(path)?
        .lines()
        .collect::<io::Result<_>>()
        .context("reading UTF-8 text")
}

fn read_sentences(path: Option<&Path>) -> Result<Vec<Sentence>> {
    Ok(read_lines(path)?.iter().map(|l| Sentence::from_line(l)).collect())
}

fn write_sentences<'a>(path: Option<&Path>, sentences: impl IntoIterator<Item = &'a Sentence>) -> Result<()> {
    let mut w = writer(path)?;
    for s in sentences {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_vectors(path: &Path) -> Result<(NGramVocabulary, usmt_gec::embeddings::EmbeddingMatrix)> {
    read_embeddings(textio::open_read(path)?).with_context(|| format!("reading {}", path.display()))
}

fn parallel(source: &Path, target: &Path) -> Result<Vec<(Sentence, Sentence)>> {
    let s = read_sentences(Some(source))?;
    let t = read_sentences(Some(target))?;
    if s.len() != t.len() {
        bail!("{} has {} lines but {} has {}", source.display(), s.len(), target.display(), t.len());
    }
    Ok(s.into_iter().zip(t).collect())
}

fn load_config(path: &Path, workspace: &Path) -> Result<(PipelineConfig, Workspace)> {
    let cfg = PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok((cfg, Workspace::new(workspace)))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .context("configuring the worker pool")?;
    match cli.command {
        Command::Preprocess {
            input,
            output,
            tokenize: tok,
            truecase_model,
            bpe_model,
            min_len,
            max_len,
        } => {
            let truecaser = truecase_model
                .map(|p| TruecaseModel::read(textio::open_read(&p)?))
                .transpose()?;
            let bpe = bpe_model.map(|p| BpeModel::read(textio::open_read(&p)?)).transpose()?;
            let lines = read_lines(input.as_deref())?;
            let sentences = lines
                .iter()
                .map(|l| if tok { tokenize(l) } else { Sentence::from_line(l) });
            let bounds = LengthBounds { min: min_len, max: max_len };
            let out: Vec<Sentence> = length_filter(sentences, bounds)
                .map(|s| match &truecaser {
                    Some(t) => t.apply(&s),
                    None => s,
                })
                .map(|s| match &bpe {
                    Some(b) => b.apply(&s),
                    None => s,
                })
                .collect();
            write_sentences(output.as_deref(), &out)?;
        }
        Command::LearnTruecase { input, output } => {
            let corpus = read_sentences(input.as_deref())?;
            let model = train_truecaser(&corpus)?;
            textio::write_atomic(&output, |w| model.write(w))?;
        }
        Command::LearnBpe { input, output, operations } => {
            let corpus = read_sentences(input.as_deref())?;
            let model = learn_bpe(&corpus, operations)?;
            textio::write_atomic(&output, |w| model.write(w))?;
        }
        Command::TrainEmbeddings {
            corpus,
            output,
            side,
            dim,
            window,
            negatives,
            epochs,
            unigrams,
            bigrams,
            trigrams,
            seed,
        } => {
            let corpus = read_sentences(Some(&corpus))?;
            let vocab = NGramVocabulary::build(&corpus, NGramCutoffs { unigrams, bigrams, trigrams });
            let label = match side {
                Side::Src => "embeddings/source",
                Side::Tgt => "embeddings/target",
            };
            let cfg = SkipGramConfig {
                dim,
                window,
                negatives,
                epochs,
                seed: derive_seed(seed, label),
                ..SkipGramConfig::default()
            };
            let m = train_ngram_embeddings(&corpus, &vocab, &cfg)?;
            textio::write_atomic(&output, |w| write_embeddings(&vocab, &m, w))?;
            log::info!("{} n-grams, dimension {dim}", vocab.len());
        }
        Command::MapEmbeddings {
            source,
            target,
            source_output,
            target_output,
            init,
            report,
            seed,
        } => {
            let (sv, sm) = read_vectors(&source)?;
            let (tv, tm) = read_vectors(&target)?;
            let (sm, _) = normalize_embeddings(&sm);
            let (tm, _) = normalize_embeddings(&tm);
            let cfg = MappingConfig {
                init: match init {
                    Init::Identical => SeedInit::IdenticalTokens,
                    Init::Unsupervised => SeedInit::FullyUnsupervised,
                },
                seed,
                ..MappingConfig::default()
            };
            let (mapping, rep) = map_embeddings(&sv, &sm, &tv, &tm, &cfg)?;
            log::info!("{} iterations, seed dictionary {}", rep.iterations, rep.seed_size);
            textio::write_atomic(&source_output, |w| write_embeddings(&sv, &mapping.map_source(&sm), w))?;
            textio::write_atomic(&target_output, |w| write_embeddings(&tv, &mapping.map_target(&tm), w))?;
            if let Some(p) = report {
                let json = serde_json::to_string_pretty(&rep)? + "\n";
                textio::write_atomic(&p, |w| w.write_all(json.as_bytes()))?;
            }
        }
        Command::InduceTable {
            source,
            target,
            output,
            tau,
            neighbors,
            backward,
        } => {
            let tau = match tau.as_str() {
                "auto" => None,
                x => Some(x.parse::<f64>().with_context(|| format!("--tau must be \"auto\" or a number, got {x:?}"))?),
            };
            let cfg = InductionConfig {
                tau,
                neighbor_limit: neighbors,
                ..InductionConfig::default()
            };
            let (sv, sm) = read_vectors(&source)?;
            let (tv, tm) = read_vectors(&target)?;
            let (table, t) = if backward {
                induce_table(&tv, &tm, &sv, &sm, &cfg)?
            } else {
                induce_table(&sv, &sm, &tv, &tm, &cfg)?
            };
            log::info!("{} entries, tau {:.4}", table.len(), t.value());
            table.write_path(&output)?;
        }
        Command::TrainLm { corpus, arpa, order } => {
            let corpus = read_sentences(Some(&corpus))?;
            let cfg = LmConfig { order, ..LmConfig::default() };
            let (lm, smoothing) = train_lm(&corpus, &cfg)?;
            log::info!("smoothing {smoothing:?}");
            lm.write_arpa_path(&arpa)?;
        }
        Command::TrainClassLm {
            corpus,
            embeddings,
            class_map,
            arpa,
            classes,
            order,
            kmeans_iterations,
            seed,
        } => {
            let (vocab, m) = read_vectors(&embeddings)?;
            let (m, _) = normalize_embeddings(&m);
            let idx = vocab.unigram_indices();
            let words: Vec<String> = idx.iter().map(|&i| vocab.ngram(i)[0].clone()).collect();
            let km = KMeansConfig {
                k: classes,
                iterations: kmeans_iterations,
                seed,
            };
            let map = induce_classes(&words, &m.select(&idx), &km)?;
            map.write_path(&class_map)?;
            let corpus = read_sentences(Some(&corpus))?;
            let cfg = LmConfig {
                order,
                ..LmConfig::class_default()
            };
            train_class_lm(&corpus, &map, &cfg)?.write_arpa_path(&arpa)?;
        }
        Command::Align {
            source,
            target,
            output,
            iters,
        } => {
            let pairs = parallel(&source, &target)?;
            let cfg = AlignerConfig {
                iterations: iters,
                ..AlignerConfig::default()
            };
            let aligned = train_symmetric(&pairs, &cfg)?.align_all(&pairs);
            let mut w = writer(output.as_deref())?;
            write_alignments(&aligned, &mut w)?;
            w.flush()?;
        }
        Command::Extract {
            source,
            target,
            alignments,
            output,
            max_phrase_len,
        } => {
            let pairs = parallel(&source, &target)?;
            let aligned = read_alignments_path(&alignments, &pairs)?;
            let table = table_from_alignments(&aligned, max_phrase_len);
            log::info!("{} entries", table.len());
            table.write_path(&output)?;
        }
        Command::Decode {
            model,
            input,
            output,
            nbest,
        } => {
            let loaded = model.load()?;
            let decoder = loaded.decoder();
            let weights = loaded.weights(&decoder)?;
            let inputs = read_sentences(input.as_deref())?;
            let mut w = writer(output.as_deref())?;
            match nbest {
                Some(n) => {
                    for (i, list) in decoder.nbest_corpus(&weights, &inputs, n)?.iter().enumerate() {
                        write_nbest(&mut w, decoder.layout(), i, list)?;
                    }
                }
                None => {
                    for t in decoder.decode_corpus(&weights, &inputs)? {
                        writeln!(w, "{}", t.tokens)?;
                    }
                }
            }
            w.flush()?;
        }
        Command::Tune {
            model,
            objective,
            gold,
            src,
            refs,
            nbest,
            iters,
            restarts,
            seed,
            output,
        } => {
            let set = match objective {
                Metric::M2 => {
                    let gold = gold.context("--objective m2 needs --gold")?;
                    TuningSet::from_m2(read_m2_path(&gold)?)
                }
                Metric::Gleu => {
                    let src = src.context("--objective gleu needs --src")?;
                    let sources = read_sentences(Some(&src))?;
                    let references = gleu_references(&refs, sources.len())?;
                    TuningSet {
                        inputs: sources.clone(),
                        references: References::Gleu { sources, references },
                    }
                }
            };
            let loaded = model.load()?;
            let decoder = loaded.decoder();
            let init = loaded.weights(&decoder)?;
            let cfg = TuningConfig {
                objective: match objective {
                    Metric::M2 => Objective::M2F05,
                    Metric::Gleu => Objective::Gleu,
                },
                n_best: nbest,
                outer_iterations: iters,
                random_restarts: restarts,
                seed,
                ..TuningConfig::default()
            };
            let outcome = tune(&decoder, &set, &init, &cfg)?;
            println!("{} {:.4}", cfg.objective, outcome.objective);
            outcome.weights.write_path(&output)?;
        }
        Command::Refine {
            config,
            workspace,
            mode,
            iters,
        } => {
            let (mut cfg, ws) = load_config(&config, &workspace)?;
            if let Some(m) = mode {
                cfg.refinement.mode = match m {
                    RefineMode::Forward => Mode::Forward,
                    RefineMode::Backward => Mode::Backward,
                };
            }
            if let Some(n) = iters {
                cfg.refinement.iterations = n;
            }
            let trained = train_all(&cfg, &ws)?;
            for m in &trained.manifests {
                let state = if trained.skipped.contains(&m.stage) { "up to date" } else { "done" };
                println!("{:<12} {state}", m.stage);
            }
        }
        Command::Spellcheck { wordlist, input, output } => {
            let list = WordList::read_path(&wordlist)?;
            let out: Vec<Sentence> = read_sentences(input.as_deref())?
                .iter()
                .map(|s| correct_sentence(s, &list))
                .collect();
            write_sentences(output.as_deref(), &out)?;
        }
        Command::BuildWordlist {
            corpus,
            output,
            min_frequency,
        } => {
            let corpus = read_sentences(Some(&corpus))?;
            build_wordlist(&corpus, min_frequency).write_path(&output)?;
        }
        Command::Evaluate {
            metric,
            hyp,
            gold,
            src,
            refs,
        } => {
            let hyps = read_sentences(Some(&hyp))?;
            match metric {
                Metric::M2 => {
                    let gold = gold.context("--metric m2 needs --gold")?;
                    let (report, _) = m2_score(&read_m2_path(&gold)?, &hyps, &MaxMatchConfig::default())?;
                    println!("{report}");
                }
                Metric::Gleu => {
                    let src = src.context("--metric gleu needs --src")?;
                    let sources = read_sentences(Some(&src))?;
                    if sources.len() != hyps.len() {
                        bail!("{} sources but {} hypotheses", sources.len(), hyps.len());
                    }
                    let references = gleu_references(&refs, sources.len())?;
                    let corpus: Vec<_> = sources
                        .into_iter()
                        .zip(hyps)
                        .zip(references)
                        .map(|((s, h), r)| (s, h, r))
                        .collect();
                    println!("GLEU {:.4}", gleu(&corpus, &GleuConfig::default())?);
                }
            }
        }
        Command::Run { config, workspace } => {
            let (cfg, ws) = load_config(&config, &workspace)?;
            print!("{}", run_pipeline(&cfg, &ws)?.to_text());
        }
        Command::OrderExperiment { config, workspace, dev } => {
            let (cfg, ws) = load_config(&config, &workspace)?;
            print!("{}", order_experiment(&cfg, &ws, dev.as_deref())?.to_text());
        }
        Command::MakeToyCorpus {
            output,
            sentences,
            tuning,
            dev,
            seed,
        } => {
            let cfg = ToyConfig {
                sentences,
                tuning,
                dev,
                seed,
                ..ToyConfig::default()
            };
            std::fs::create_dir_all(&output)?;
            make_toy_corpus(&cfg)?.write(&output)?;
        }
    }
    Ok(())
}

/// Transposes reference files into per-sentence reference lists.
fn gleu_references(files: &[PathBuf], n: usize) -> Result<Vec<Vec<Sentence>>> {
    if files.is_empty() {
        bail!("GLEU needs at least one --refs file");
    }
    let mut out = vec![Vec::new(); n];
    for f in files {
        let refs = read_sentences(Some(f))?;
        if refs.len() != n {
            bail!("{} has {} lines, expected {n}", f.display(), refs.len());
        }
        for (slot, r) in out.iter_mut().zip(refs) {
            slot.push(r);
        }
    }
    Ok(out)
}
