//! `tsa` command line: one subcommand per pipeline stage.
//!
//! Every subcommand accepts `--config FILE` (a TOML [`RunConfig`]); flags
//! override file values and the resolved configuration is written next to
//! the outputs so a run can be repeated from it alone.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_pool, load_domains, load_reviews, write_pool, IngestConfig, ReviewFormat};
use crate::dataset::{read_labeled, write_labeled, WriteOptions};
use crate::eval::{aggregate_seeds, evaluate_run, pr_curve, render_table, sample_errors, write_pr_csv};
use crate::lexicon::{SentimentLexicon, DEFAULT_THRESHOLD};
use crate::seed::derive_seed;
use crate::selftrain::{run_self_training, split_dev, IterationArtifact, LoopConfig, TrainConfig};
use crate::synth::{generate, write_corpus, SynthSpec};
use crate::tagger::{
    BaselineTrainer, Endpoint, ExternalClient, ExternalTrainer, LabeledSentence, TaggerKind, TaggerModel, Trainer,
};
use crate::weaklabel::{build_weak_set, write_weak_set, Prediction, SelectionConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub reviews: Option<PathBuf>,
    pub business: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub domains: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub labeled: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub predictions: Vec<PathBuf>,
    pub seeds_dir: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerSection {
    pub kind: TaggerKind,
    /// `tcp://host:port` or a shell command speaking the protocol on stdio.
    pub endpoint: Option<String>,
}

impl Default for TaggerSection {
    fn default() -> Self {
        TaggerSection {
            kind: TaggerKind::Baseline,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopSection {
    pub iterations: usize,
    pub dev_from_labeled_only: bool,
    pub predict_chunk: usize,
}

impl Default for LoopSection {
    fn default() -> Self {
        let d = LoopConfig::default();
        LoopSection {
            iterations: d.iterations,
            dev_from_labeled_only: d.dev_from_labeled_only,
            predict_chunk: d.predict_chunk,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    pub max_sentences: Option<usize>,
    pub lexicon_threshold: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            max_sentences: None,
            lexicon_threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub dataset: String,
    pub thresholds: Vec<f64>,
    pub errors_per_domain: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            dataset: "test".into(),
            thresholds: (0..20).map(|i| i as f64 / 20.0).collect(),
            errors_per_domain: 30,
        }
    }
}

/// Everything a stage needs, in one human-editable file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub paths: Paths,
    pub tagger: TaggerSection,
    pub ingest: IngestSection,
    #[serde(rename = "loop")]
    pub loop_: LoopSection,
    pub selection: SelectionConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let body = toml::to_string(self).context("serializing run config")?;
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.selection.validate()?;
        self.train.validate()?;
        if self.workers == Some(0) {
            bail!("--workers must be at least 1");
        }
        if self.loop_.predict_chunk == 0 {
            bail!("predict_chunk must be positive");
        }
        if self.tagger.kind == TaggerKind::External && self.tagger.endpoint.is_none() {
            bail!("--tagger external needs --endpoint");
        }
        if !(self.ingest.lexicon_threshold > 0.0 && self.ingest.lexicon_threshold <= 1.0) {
            bail!("lexicon threshold must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn loop_config(&self, artifact_dir: PathBuf) -> LoopConfig {
        LoopConfig {
            iterations: self.loop_.iterations,
            selection: SelectionConfig {
                rng_seed: self.seed,
                ..self.selection
            },
            train: self.train,
            seed: self.seed,
            artifact_dir,
            dev_from_labeled_only: self.loop_.dev_from_labeled_only,
            predict_chunk: self.loop_.predict_chunk,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tsa",
    version,
    about = "Weak-label self-training for targeted sentiment analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Threads used for prediction.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct TaggerArgs {
    #[arg(long, value_parser = parse_kind)]
    tagger: Option<TaggerKind>,
    /// External tagger: `tcp://host:port` or a command run through `sh -c`.
    #[arg(long)]
    endpoint: Option<String>,
    /// Lexicon used for the baseline tagger's features.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<TaggerKind, String> {
    match s {
        "baseline" => Ok(TaggerKind::Baseline),
        "external" => Ok(TaggerKind::External),
        _ => Err(format!("expected baseline or external, got {s}")),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the unlabeled sentence pool from raw reviews.
    Ingest {
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        business: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        domains: Option<PathBuf>,
        #[arg(long)]
        max_sentences: Option<usize>,
        #[arg(long)]
        lexicon_threshold: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic multi-domain corpus.
    Synth {
        /// JSON or TOML synth spec; defaults to the built-in six-domain spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one tagger on labeled data.
    Train {
        #[arg(long)]
        labeled: Option<PathBuf>,
        /// Explicit dev set; otherwise split off the labeled data.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[command(flatten)]
        tagger: TaggerArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Tag sentences with a trained model.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Turn predictions into a weak-label set.
    Select {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the self-training loop.
    Loop {
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        tagger: TaggerArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against gold, one prediction file per seed.
    Evaluate {
        #[arg(long)]
        pred: Vec<PathBuf>,
        /// Directory holding one `*.jsonl` prediction file per seed.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample false positives per domain for manual review.
    SampleErrors {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize the iterations of a loop run.
    Report {
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Parse `argv` (program name first) and run; returns the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a PathBuf> {
    p.as_ref().with_context(|| format!("missing {flag}"))
}

fn base_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set_opt(&mut cfg.workers, common.workers);
    Ok(cfg)
}

fn apply_tagger(cfg: &mut RunConfig, t: TaggerArgs) {
    set(&mut cfg.tagger.kind, t.tagger);
    set_opt(&mut cfg.tagger.endpoint, t.endpoint);
    set_opt(&mut cfg.paths.lexicon, t.lexicon);
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// `<out>.config.toml` next to a file output.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    out.with_file_name(name)
}

fn with_workers<T>(cfg: &RunConfig, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T>
where
    T: Send,
{
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")?
            .install(f),
        None => f(),
    }
}

fn read_set(path: &Path) -> anyhow::Result<Vec<LabeledSentence>> {
    let (set, report) = read_labeled(path)?;
    if report.snapped + report.dropped_empty + report.dropped_polarity > 0 {
        log::warn!(
            "{}: {} span(s) snapped to token boundaries, {} empty, {} neutral/mixed dropped",
            path.display(),
            report.snapped,
            report.dropped_empty,
            report.dropped_polarity
        );
    }
    Ok(set)
}

fn load_lexicon(cfg: &RunConfig) -> anyhow::Result<Option<Arc<SentimentLexicon>>> {
    cfg.paths
        .lexicon
        .as_ref()
        .map(|p| Ok(Arc::new(SentimentLexicon::load(p, cfg.ingest.lexicon_threshold)?)))
        .transpose()
}

fn make_trainer(cfg: &RunConfig) -> anyhow::Result<Box<dyn Trainer>> {
    Ok(match cfg.tagger.kind {
        TaggerKind::Baseline => Box::new(BaselineTrainer {
            lexicon: load_lexicon(cfg)?,
        }),
        TaggerKind::External => {
            let ep = cfg.tagger.endpoint.as_deref().context("missing --endpoint")?;
            Box::new(ExternalTrainer::connect(&Endpoint::parse(ep))?)
        }
    })
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Ingest {
            reviews,
            business,
            lexicon,
            domains,
            max_sentences,
            lexicon_threshold,
            seed,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.paths.reviews, reviews);
            set_opt(&mut cfg.paths.business, business);
            set_opt(&mut cfg.paths.lexicon, lexicon);
            set_opt(&mut cfg.paths.domains, domains);
            set_opt(&mut cfg.ingest.max_sentences, max_sentences);
            set(&mut cfg.ingest.lexicon_threshold, lexicon_threshold);
            set(&mut cfg.seed, seed);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            ingest(&cfg)
        }
        Command::Synth {
            spec,
            seed,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.paths.spec, spec);
            set(&mut cfg.seed, seed);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            synth(&cfg)
        }
        Command::Train {
            labeled,
            dev,
            tagger,
            seed,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.paths.labeled, labeled);
            set_opt(&mut cfg.paths.dev, dev);
            apply_tagger(&mut cfg, tagger);
            set(&mut cfg.seed, seed);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            train(&cfg)
        }
        Command::Predict {
            model,
            input,
            endpoint,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.paths.model, model);
            set_opt(&mut cfg.paths.input, input);
            set_opt(&mut cfg.tagger.endpoint, endpoint);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            with_workers(&cfg, || predict(&cfg))
        }
        Command::Select {
            predictions,
            seed,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(p) = predictions {
                cfg.paths.predictions = vec![p];
            }
            set(&mut cfg.seed, seed);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            select(&cfg)
        }
        Command::Loop {
            labeled,
            pool,
            iterations,
            tagger,
            seed,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.paths.labeled, labeled);
            set_opt(&mut cfg.paths.pool, pool);
            set(&mut cfg.loop_.iterations, iterations);
            apply_tagger(&mut cfg, tagger);
            set(&mut cfg.seed, seed);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            with_workers(&cfg, || self_train(&cfg))
        }
        Command::Evaluate {
            pred,
            seeds,
            gold,
            dataset,
            thresholds,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if !pred.is_empty() {
                cfg.paths.predictions = pred;
            }
            set_opt(&mut cfg.paths.seeds_dir, seeds);
            set_opt(&mut cfg.paths.gold, gold);
            set(&mut cfg.eval.dataset, dataset);
            set(&mut cfg.eval.thresholds, thresholds);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            evaluate(&cfg)
        }
        Command::SampleErrors {
            pred,
            gold,
            n,
            seed,
            out,
            common,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(p) = pred {
                cfg.paths.predictions = vec![p];
            }
            set_opt(&mut cfg.paths.gold, gold);
            set(&mut cfg.eval.errors_per_domain, n);
            set(&mut cfg.seed, seed);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            errors(&cfg)
        }
        Command::Report { run, out, common } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.paths.run_dir, run);
            set_opt(&mut cfg.paths.out, out);
            cfg.validate()?;
            report(&cfg)
        }
    }
}

fn ingest(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = &cfg.paths;
    let out = need(&p.out, "--out")?;
    let lexicon = SentimentLexicon::load(need(&p.lexicon, "--lexicon")?, cfg.ingest.lexicon_threshold)?;
    let domains = load_domains(need(&p.domains, "--domains")?)?;
    let format = match &p.business {
        Some(b) => ReviewFormat::TwoFile { business: b.clone() },
        None => ReviewFormat::PreJoined,
    };
    let mut stream = load_reviews(need(&p.reviews, "--reviews")?, &format)?;
    let icfg = IngestConfig {
        max_sentences: cfg.ingest.max_sentences,
        seed: derive_seed(cfg.seed, "ingest"),
    };
    let (pool, mut stats) = build_pool(stream.by_ref(), &domains, &lexicon, &icfg);
    stats.reviews_skipped_malformed = stream.skipped();
    ensure_parent(out)?;
    write_pool(out, &pool)?;
    let stats_path = out.with_extension("stats.json");
    fs::write(&stats_path, serde_json::to_string_pretty(&stats)? + "\n")?;
    cfg.save(&sidecar(out))?;
    info!(
        "kept {} sentences from {} reviews ({} malformed lines skipped)",
        stats.sentences_kept, stats.reviews_read, stats.reviews_skipped_malformed
    );
    Ok(())
}

fn read_spec(path: &Path) -> anyhow::Result<SynthSpec> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
    } else {
        serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
    }
}

fn synth(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = need(&cfg.paths.out, "--out")?;
    let mut spec = match &cfg.paths.spec {
        Some(p) => read_spec(p)?,
        None => SynthSpec::default(),
    };
    spec.seed = cfg.seed;
    let corpus = generate(&spec)?;
    write_corpus(out, &spec, &corpus)?;
    cfg.save(&out.join("run_config.toml"))?;
    info!(
        "wrote {} labeled, {} pool and {} test sentences to {}",
        corpus.labeled.len(),
        corpus.pool.len(),
        corpus.tests.iter().map(|(_, t)| t.len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = need(&cfg.paths.out, "--out")?;
    let labeled = read_set(need(&cfg.paths.labeled, "--labeled")?)?;
    // Same seed derivation as iteration 0 of the loop.
    let (train, dev) = match &cfg.paths.dev {
        Some(d) => (labeled, read_set(d)?),
        None => split_dev(&labeled, cfg.train.dev_fraction, derive_seed(cfg.seed, "split/0"))?,
    };
    let trainer = make_trainer(cfg)?;
    let (model, report) = trainer.train(&train, &dev, &cfg.train, derive_seed(cfg.seed, "train/0"))?;
    ensure_parent(out)?;
    model.save(out)?;
    cfg.save(&sidecar(out))?;
    info!(
        "trained on {} sentences, best epoch {} of {}",
        train.len(),
        report.best_epoch,
        report.epochs_run
    );
    Ok(())
}

fn predict(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = need(&cfg.paths.out, "--out")?;
    let client = match &cfg.tagger.endpoint {
        Some(ep) => Some(Arc::new(std::sync::Mutex::new(ExternalClient::connect(
            &Endpoint::parse(ep),
        )?))),
        None => None,
    };
    let model = TaggerModel::load(need(&cfg.paths.model, "--model")?, client)?;
    let input = read_set(need(&cfg.paths.input, "--input")?)?;
    let sentences: Vec<_> = input.into_iter().map(|l| l.sentence).collect();
    let mut labeled = Vec::with_capacity(sentences.len());
    for chunk in sentences.chunks(cfg.loop_.predict_chunk) {
        labeled.extend(model.predict_labeled(chunk)?);
    }
    ensure_parent(out)?;
    write_labeled(
        out,
        &labeled,
        WriteOptions {
            confidence: true,
            provenance: false,
        },
    )?;
    cfg.save(&sidecar(out))?;
    info!("tagged {} sentences", labeled.len());
    Ok(())
}

fn select(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = need(&cfg.paths.out, "--out")?;
    let [path] = cfg.paths.predictions.as_slice() else {
        bail!("select takes exactly one --predictions file");
    };
    let predictions: Vec<Prediction> = read_set(path)?
        .into_iter()
        .map(|l| (l.sentence, l.gold_spans))
        .collect();
    let sel = SelectionConfig {
        rng_seed: cfg.seed,
        ..cfg.selection
    };
    let (weak, stats) = build_weak_set(&predictions, &sel);
    ensure_parent(out)?;
    write_weak_set(out, &weak)?;
    stats.write(&out.with_extension("selection.json"))?;
    cfg.save(&sidecar(out))?;
    info!(
        "{} target and {} no-target sentences selected",
        weak.target_part.len(),
        weak.non_target_part.len()
    );
    Ok(())
}

fn self_train(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = need(&cfg.paths.out, "--out")?;
    let labeled = read_set(need(&cfg.paths.labeled, "--labeled")?)?;
    let pool: Vec<_> = read_set(need(&cfg.paths.pool, "--pool")?)?
        .into_iter()
        .map(|l| l.sentence)
        .collect();
    let trainer = make_trainer(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    cfg.save(&out.join("run_config.toml"))?;
    let outcome = run_self_training(&labeled, &pool, &cfg.loop_config(out.clone()), trainer.as_ref())?;
    if outcome.resumed > 0 {
        info!("reused {} completed iteration(s)", outcome.resumed);
    }
    let last = outcome.artifacts.last().context("loop produced no model")?;
    info!("final model: {}", out.join(&last.model_path).display());
    Ok(())
}

fn prediction_files(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = cfg.paths.predictions.clone();
    if let Some(dir) = &cfg.paths.seeds_dir {
        let mut found: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        found.sort();
        files.extend(found);
    }
    if files.is_empty() {
        bail!("give --pred or --seeds");
    }
    Ok(files)
}

fn evaluate(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = need(&cfg.paths.out, "--out")?;
    let gold = read_set(need(&cfg.paths.gold, "--gold")?)?;
    let files = prediction_files(cfg)?;
    let mut runs = Vec::with_capacity(files.len());
    let mut preds = Vec::with_capacity(files.len());
    for f in &files {
        let p = read_set(f)?;
        runs.push(evaluate_run(&p, &gold).with_context(|| format!("evaluating {}", f.display()))?);
        preds.push(p);
    }
    let report = aggregate_seeds(&runs, &cfg.eval.dataset)?;
    let curve = pr_curve(&preds, &gold, &cfg.eval.thresholds)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(out.join("report.txt"), render_table(&report))?;
    write_pr_csv(&out.join("pr_curve.csv"), &curve)?;
    cfg.save(&out.join("run_config.toml"))?;
    info!(
        "macro F1 {:.1} +/- {:.1} over {} run(s)",
        report.macro_.f1.mean * 100.0,
        report.macro_.f1.std * 100.0,
        runs.len()
    );
    Ok(())
}

fn errors(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = need(&cfg.paths.out, "--out")?;
    let [path] = cfg.paths.predictions.as_slice() else {
        bail!("sample-errors takes exactly one --pred file");
    };
    let preds = read_set(path)?;
    let gold = read_set(need(&cfg.paths.gold, "--gold")?)?;
    let sample = sample_errors(
        &preds,
        &gold,
        cfg.eval.errors_per_domain,
        derive_seed(cfg.seed, "sample-errors"),
    )?;
    ensure_parent(out)?;
    sample.write(out)?;
    cfg.save(&sidecar(out))?;
    info!("sampled {} errors", sample.records.len());
    Ok(())
}

fn report(cfg: &RunConfig) -> anyhow::Result<()> {
    let dir = need(&cfg.paths.run_dir, "--run")?;
    let out = need(&cfg.paths.out, "--out")?;
    let mut rows = Vec::new();
    for i in 0.. {
        let path = dir.join(format!("iter-{i}")).join("manifest.json");
        let Ok(raw) = fs::read_to_string(&path) else { break };
        let a: IterationArtifact = serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        rows.push(a);
    }
    if rows.is_empty() {
        bail!("no completed iterations under {}", dir.display());
    }
    let mut table = format!(
        "{:>4}  {:>8}  {:>6}  {:>8}  {:>9}  {:>6}  {:>8}\n",
        "iter", "train", "dev", "targets", "no-target", "epoch", "dev F1"
    );
    for a in &rows {
        let (t, n) = a.selection.as_ref().map_or((0, 0), |s| {
            s.per_domain
                .values()
                .fold((0, 0), |acc, d| (acc.0 + d.target_kept, acc.1 + d.non_target_kept))
        });
        let best = a.train_report.dev_trace.iter().copied().fold(f64::NAN, f64::max);
        table.push_str(&format!(
            "{:>4}  {:>8}  {:>6}  {:>8}  {:>9}  {:>6}  {:>8.4}\n",
            a.iteration, a.train_size, a.dev_size, t, n, a.train_report.best_epoch, best
        ));
    }
    ensure_parent(out)?;
    fs::write(out, table).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
