//! Batch command-line front end: featurize, train, eval, ablate, predict.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use medsev::corpus::{load_corpus, read_records, resolve_format, split_kfold, tokenize, Corpus, CorpusFormat, TaskKind};
use medsev::evaluation::{ablate, cross_validate, AblationTable, CvReport};
use medsev::fusion::WgccaConfig;
use medsev::lexicon::{load_lexicon, load_word_list, Lexicon};
use medsev::pipeline::{FittedPipeline, PipelineSpec, ViewKind, ViewSpec};
use medsev::sentiment_views::{compute_idf, SentimentFeaturizer, TargetParams, SENTIMENT_COLUMNS};
use medsev::view_ingest::{load_view_vectors, ViewMatrix};

use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "medsev", version, about = "Severity classification of health-forum posts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the five sentiment-view columns for every post as CSV.
    Featurize(CommonArgs),
    /// Fit one pipeline per task on the whole corpus and save the model.
    Train(CommonArgs),
    /// Run k-fold cross-validation and write a metrics report.
    Eval(CommonArgs),
    /// Cross-validate with each view removed in turn and write a CSV table.
    Ablate(CommonArgs),
    /// Label posts with a saved model.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; relative paths inside resolve against its directory.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the classifier shuffle and the fold split.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file for this command (overrides the config's [output] entry).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Corpus file (JSONL or CSV with id, text, task, label).
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Lexicon file.
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Latent dimension of the fused representation.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Model file written by `train` (defaults to the config's [output] model).
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Posts to label (JSONL or CSV with id and text; task optional). Defaults to the corpus.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Featurize(a) => cmd_featurize(&load_config(&a)?),
        Command::Train(a) => cmd_train(&load_config(&a)?),
        Command::Eval(a) => cmd_eval(&load_config(&a)?),
        Command::Ablate(a) => cmd_ablate(&load_config(&a)?),
        Command::Predict(a) => {
            // `--out` names the predictions file only, never the model.
            let common = CommonArgs {
                out: None,
                ..a.common.clone()
            };
            let mut config = load_config(&common)?;
            if let Some(m) = a.model {
                config.output.model = Some(m);
            }
            cmd_predict(&config, a.input.as_deref(), a.common.out.as_deref())
        }
    }
}

/// Config file (if any) with flag overrides applied. `--out` is recorded in
/// every output slot; each command reads only its own.
pub fn load_config(args: &CommonArgs) -> Result<PipelineConfig> {
    let mut c = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if args.seed.is_some() {
        c.seed = args.seed;
    }
    if let Some(p) = &args.corpus {
        c.corpus.path = Some(p.clone());
    }
    if let Some(p) = &args.lexicon {
        c.lexicon.path = Some(p.clone());
    }
    if let Some(k) = args.folds {
        c.cv.folds = k;
    }
    if args.latent_dim.is_some() {
        c.fusion.latent_dim = args.latent_dim;
    }
    if args.epochs.is_some() {
        c.train.epochs = args.epochs;
    }
    if let Some(out) = &args.out {
        let o = &mut c.output;
        for slot in [&mut o.features, &mut o.model, &mut o.metrics, &mut o.ablation, &mut o.predictions] {
            *slot = Some(out.clone());
        }
    }
    Ok(c)
}

fn output_path(configured: &Option<PathBuf>, default: &str) -> PathBuf {
    configured.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path)
        .map_err(|e| anyhow!(e.error))
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load_lexicon_from(config: &PipelineConfig) -> Result<Lexicon> {
    let path = config.lexicon_path()?;
    let mut lexicon = load_lexicon(path, config.lexicon.kind)?;
    if let Some(cues) = &config.lexicon.negation_cues {
        lexicon = lexicon.with_negation_cues(load_word_list(cues)?)?;
    }
    Ok(lexicon.with_suffix_fallback(config.lexicon.suffix_fallback))
}

fn featurizer(config: &PipelineConfig) -> Result<SentimentFeaturizer> {
    let mut target = TargetParams {
        window: config.lexicon.window,
        normalizer: config.lexicon.normalizer.unwrap_or(2 * config.lexicon.window),
        ..TargetParams::default()
    };
    if let Some(path) = &config.lexicon.stative_verbs {
        target.stative_verbs = load_word_list(path)?.into_iter().collect();
    }
    target.validate()?;
    Ok(SentimentFeaturizer {
        lexicon: load_lexicon_from(config)?,
        negation_scope: config.lexicon.negation_scope,
        target,
    })
}

fn check_weight(name: &str, w: f64) -> Result<f64> {
    if !(w.is_finite() && w >= 0.0) {
        bail!("view {name:?} has invalid weight {w}; weights must be finite and >= 0");
    }
    Ok(w)
}

fn load_externals(config: &PipelineConfig) -> Result<Vec<ViewMatrix>> {
    config
        .views_or_default()
        .external
        .iter()
        .map(|e| {
            let v = load_view_vectors(&e.path)?;
            let w = check_weight(&v.name, e.weight)?;
            Ok(v.with_weight(w)?)
        })
        .collect()
}

pub fn build_spec(config: &PipelineConfig) -> Result<PipelineSpec> {
    let v = config.views_or_default();
    let mut views = Vec::new();
    for (weight, kind) in [
        (v.word_sentiment, ViewKind::WordSentiment),
        (v.target_sentiment, ViewKind::TargetSentiment),
        (v.sentiment, ViewKind::Sentiment),
    ] {
        if let Some(w) = weight {
            let view = ViewSpec::builtin(kind, w);
            check_weight(view.name(), w)?;
            views.push(view);
        }
    }
    if let Some(h) = &v.hashed {
        let kind = ViewKind::HashedContent { dim: h.dim, seed: h.seed };
        views.push(ViewSpec::builtin(kind, check_weight("content_hashed", h.weight)?));
    }
    views.extend(load_externals(config)?.into_iter().map(ViewSpec::external));
    let mut names = std::collections::BTreeSet::new();
    for view in &views {
        if !names.insert(view.name().to_string()) {
            bail!("view name {:?} is configured twice", view.name());
        }
    }
    let spec = PipelineSpec {
        featurizer: featurizer(config)?,
        views,
        standardize: config.fusion.standardize,
        fusion: WgccaConfig {
            latent_dim: config.fusion.latent_dim,
            ridge: config.fusion.ridge,
        },
        train: config.train_config(),
    };
    if spec.active_view_count() == 0 {
        bail!("no view has a positive weight");
    }
    spec.train.validate()?;
    Ok(spec)
}

fn load_corpus_from(config: &PipelineConfig) -> Result<Corpus> {
    let corpus = load_corpus(config.corpus_path()?, config.corpus.format)?;
    if corpus.is_empty() {
        bail!("corpus {} is empty", config.corpus_path()?.display());
    }
    Ok(corpus)
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn cmd_featurize(config: &PipelineConfig) -> Result<()> {
    let corpus = load_corpus_from(config)?;
    let featurizer = featurizer(config)?;
    let tokens: Vec<_> = corpus.posts().iter().map(|p| tokenize(&p.text)).collect();
    let idf = compute_idf(&tokens);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id"];
    header.extend(SENTIMENT_COLUMNS);
    w.write_record(&header)?;
    for (post, t) in corpus.posts().iter().zip(&tokens) {
        let row = featurizer.featurize(t, &idf);
        let mut record = vec![post.id.clone()];
        record.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!(e.to_string()))?;
    let out = output_path(&config.output.features, "features.csv");
    write_atomic(&out, &bytes)?;
    info!("wrote {} rows to {}", corpus.len(), out.display());
    Ok(())
}

pub const MODEL_FORMAT: &str = "medsev-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub pipelines: Vec<FittedPipeline>,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
        let model: ModelFile =
            serde_json::from_str(&text).with_context(|| format!("invalid model file {}", path.display()))?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            bail!(
                "{} is a {:?} v{} file; expected {MODEL_FORMAT:?} v{MODEL_VERSION}",
                path.display(),
                model.format,
                model.version
            );
        }
        Ok(model)
    }

    pub fn pipeline(&self, task: TaskKind) -> Option<&FittedPipeline> {
        self.pipelines.iter().find(|p| p.task == task)
    }
}

pub fn cmd_train(config: &PipelineConfig) -> Result<()> {
    let corpus = load_corpus_from(config)?;
    let spec = build_spec(config)?;
    let mut pipelines = Vec::new();
    for task in corpus.tasks() {
        let subset = corpus.by_task(task);
        let fitted = spec.fit(&subset).with_context(|| format!("training {task}"))?;
        info!("trained {task} on {} posts", subset.len());
        pipelines.push(fitted);
    }
    let model = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        pipelines,
    };
    let out = output_path(&config.output.model, "model.json");
    write_atomic(&out, serde_json::to_string_pretty(&model)?.as_bytes())?;
    info!("wrote model to {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub folds: usize,
    pub fold_seed: u64,
    pub tasks: Vec<CvReport>,
}

fn fold_plan(config: &PipelineConfig, corpus: &Corpus) -> Result<medsev::corpus::FoldPlan> {
    Ok(split_kfold(corpus, config.cv.folds, config.fold_seed(), config.cv.stratified)?)
}

pub fn cmd_eval(config: &PipelineConfig) -> Result<()> {
    let corpus = load_corpus_from(config)?;
    let spec = build_spec(config)?;
    let plan = fold_plan(config, &corpus)?;
    let mut tasks = Vec::new();
    for task in corpus.tasks() {
        let report = cross_validate(&corpus.by_task(task), &spec, &plan, &mut ())
            .with_context(|| format!("evaluating {task}"))?;
        tasks.push(report);
    }
    let metrics = MetricsFile {
        folds: plan.k(),
        fold_seed: config.fold_seed(),
        tasks,
    };
    let out = output_path(&config.output.metrics, "metrics.json");
    write_atomic(&out, serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    print!("{}", metrics_table(&metrics));
    info!("wrote metrics to {}", out.display());
    Ok(())
}

pub fn metrics_table(metrics: &MetricsFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<18} {:>5} {:>9} {:>12} {:>9}", "task", "fold", "macro_f1", "weighted_f1", "accuracy");
    for r in &metrics.tasks {
        for f in &r.folds {
            let m = &f.metrics;
            let _ = writeln!(
                s,
                "{:<18} {:>5} {:>9.4} {:>12.4} {:>9.4}",
                r.task.as_str(),
                f.fold,
                m.macro_avg.f1,
                m.weighted_avg.f1,
                m.accuracy
            );
        }
        let _ = writeln!(
            s,
            "{:<18} {:>5} {:>9.4} {:>12.4} {:>9.4}",
            r.task.as_str(),
            "mean",
            r.macro_f1.mean,
            r.weighted_f1.mean,
            r.accuracy.mean
        );
        let _ = writeln!(
            s,
            "{:<18} {:>5} {:>9.4} {:>12.4} {:>9.4}",
            r.task.as_str(),
            "std",
            r.macro_f1.std,
            r.weighted_f1.std,
            r.accuracy.std
        );
    }
    s
}

pub fn cmd_ablate(config: &PipelineConfig) -> Result<()> {
    let corpus = load_corpus_from(config)?;
    let spec = build_spec(config)?;
    let plan = fold_plan(config, &corpus)?;
    let table = ablate(&corpus, &spec, &plan)?;
    let csv = ablation_csv(&table)?;
    let out = output_path(&config.output.ablation, "ablation.csv");
    write_atomic(&out, csv.as_bytes())?;
    print!("{csv}");
    info!("wrote ablation table to {}", out.display());
    Ok(())
}

/// `view,condition_f1,medication_f1`; a task absent from the corpus leaves
/// its column empty.
pub fn ablation_csv(table: &AblationTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["view", "condition_f1", "medication_f1"])?;
    for row in &table.rows {
        let cell = |task: TaskKind| {
            table
                .tasks
                .iter()
                .position(|&t| t == task)
                .map_or(String::new(), |i| fmt_f64(row.f1[i]))
        };
        w.write_record([row.view.clone(), cell(TaskKind::MedicalCondition), cell(TaskKind::Medication)])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!(e.to_string()))?;
    Ok(String::from_utf8(bytes)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub task: TaskKind,
    pub label: String,
    pub probabilities: BTreeMap<String, f64>,
    pub view_contributions: BTreeMap<String, f64>,
}

pub fn cmd_predict(config: &PipelineConfig, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let model_path = config
        .output
        .model
        .clone()
        .ok_or_else(|| anyhow!("no model given; pass --model or set [output] model"))?;
    let model = ModelFile::load(&model_path)?;
    let lexicon = load_lexicon_from(config)?;
    let externals = load_externals(config)?;
    let input = match input {
        Some(p) => p.to_path_buf(),
        None => config.corpus_path()?.to_path_buf(),
    };
    let format: CorpusFormat = resolve_format(&input, config.corpus.format)?;
    let records = read_records(&input, format)?;

    // Posts without a task go to every pipeline in the model.
    let mut batches: BTreeMap<TaskKind, Vec<(String, String)>> = BTreeMap::new();
    let mut order: Vec<(String, Vec<TaskKind>)> = Vec::with_capacity(records.len());
    for (line, r) in &records {
        let tasks = match &r.task {
            Some(t) => {
                let task: TaskKind = t.parse().with_context(|| format!("{}:{line}", input.display()))?;
                if model.pipeline(task).is_none() {
                    bail!("{}:{line}: model has no pipeline for task {task}", input.display());
                }
                vec![task]
            }
            None => model.pipelines.iter().map(|p| p.task).collect(),
        };
        for &t in &tasks {
            batches.entry(t).or_default().push((r.id.clone(), r.text.clone()));
        }
        order.push((r.id.clone(), tasks));
    }

    let mut results: BTreeMap<TaskKind, std::vec::IntoIter<medsev::pipeline::Prediction>> = BTreeMap::new();
    for (task, posts) in &batches {
        let pipeline = model.pipeline(*task).expect("checked above");
        let preds = pipeline
            .predict(&lexicon, &externals, posts)
            .with_context(|| format!("predicting {task}"))?;
        results.insert(*task, preds.into_iter());
    }
    let mut text = String::new();
    for (id, tasks) in order {
        for task in tasks {
            let p = results.get_mut(&task).and_then(Iterator::next).expect("one prediction per post");
            debug_assert_eq!(p.id, id);
            let pipeline = model.pipeline(task).expect("checked above");
            let line = PredictionLine {
                id: p.id,
                task,
                label: p.label,
                probabilities: pipeline.class_names().iter().cloned().zip(p.probabilities).collect(),
                view_contributions: p.view_contributions,
            };
            text.push_str(&serde_json::to_string(&line)?);
            text.push('\n');
        }
    }
    let out = match out {
        Some(p) => p.to_path_buf(),
        None => output_path(&config.output.predictions, "predictions.jsonl"),
    };
    write_atomic(&out, text.as_bytes())?;
    info!("wrote {} predictions to {}", records.len(), out.display());
    Ok(())
}
