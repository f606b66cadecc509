//! Implementation of the `ekmanlab` command.
//!
//! Exit codes: 0 success, 64 usage error, 2 data error, 3 model error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ekmanlab::corpus::{build_corpus, CorpusPaths, Split};
use ekmanlab::ensembles::{ModelConfig, ModelKind};
use ekmanlab::features::TfIdfConfig;
use ekmanlab::learners::FitReport;
use ekmanlab::metrics::{compare, evaluate, EvaluationReport};
use ekmanlab::modelstore::{self, BundleMetadata, ModelBundle};
use ekmanlab::pipeline::{dataset_digest, predict_response, train_bundle, EmojiTable, PreparedCorpus};
use ekmanlab::textnorm::{NormResources, PipelineMode, ResourcePaths};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_MODEL: i32 = 3;

pub const DATA_DIR_ENV: &str = "EKMANLAB_DATA_DIR";
pub const PREPARED_FILE: &str = "prepared.json";
pub const DISTRIBUTION_FILE: &str = "distribution.json";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Model(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Model(_) => EXIT_MODEL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Model(m) => m,
        }
    }

    fn from_core(e: ekmanlab::Error) -> Self {
        match e {
            ekmanlab::Error::Config(_) => CliError::Usage(e.to_string()),
            e if e.is_data_error() => CliError::Data(e.to_string()),
            e => CliError::Model(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Run configuration, read from `--config` and then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root for relative split paths. Falls back to `$EKMANLAB_DATA_DIR`,
    /// then `data`.
    pub data_dir: Option<PathBuf>,
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
    /// Fine-to-coarse mapping JSON; the canonical mapping when absent.
    pub mapping: Option<PathBuf>,
    pub resources: ResourcePaths,
    pub pipeline_mode: PipelineMode,
    pub tfidf: TfIdfConfig,
    /// Per-kind overrides of the default model configurations.
    pub models: BTreeMap<String, ModelConfig>,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Emoji table JSON used by `predict` and `serve`.
    pub emoji: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            train: "train.tsv".into(),
            validation: "dev.tsv".into(),
            test: "test.tsv".into(),
            mapping: None,
            resources: ResourcePaths::default(),
            pipeline_mode: PipelineMode::Full,
            tfidf: TfIdfConfig::default(),
            models: BTreeMap::new(),
            seed: 0,
            out_dir: "runs".into(),
            emoji: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn data_root(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn corpus_paths(&self) -> CorpusPaths {
        let root = self.data_root();
        CorpusPaths {
            train: root.join(&self.train),
            validation: root.join(&self.validation),
            test: root.join(&self.test),
            mapping: self.mapping.clone(),
        }
    }

    pub fn model_config(&self, kind: ModelKind) -> CliResult<ModelConfig> {
        let base = self
            .models
            .get(kind.name())
            .cloned()
            .unwrap_or_else(|| kind.default_config());
        base.validate().map_err(|e| CliError::Usage(format!("{kind}: {e}")))?;
        Ok(base.with_seed(self.seed))
    }

    pub fn resources(&self) -> CliResult<NormResources> {
        NormResources::load(&self.resources).map_err(CliError::from_core)
    }

    pub fn emoji_table(&self) -> CliResult<EmojiTable> {
        match &self.emoji {
            None => Ok(EmojiTable::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                EmojiTable::from_json(&text).map_err(CliError::from_core)
            }
        }
    }

    pub fn prepared_path(&self) -> PathBuf {
        self.out_dir.join(PREPARED_FILE)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ekmanlab", version, about = "Emotion detection on Reddit comments")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, resolve, deduplicate and normalize the splits.
    Prepare,
    /// Train one model kind and save it as a bundle.
    Train {
        /// One of nb, logreg, svm, tree, forest, gbt, voting, bagging-svm,
        /// bagging-gbt, bagging-logreg, stacking.
        kind: Option<String>,
        #[arg(long = "model", conflicts_with = "kind")]
        model: Option<String>,
    },
    /// Evaluate a bundle on a prepared split.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Merge evaluation reports into a comparison table.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Predict the emotion of one text.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        text: String,
    },
    /// Serve a bundle over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = ekmanlab_service::DEFAULT_PORT)]
        port: u16,
        /// Allowed CORS origin; repeatable. Any origin when omitted.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        /// Directory served under /ui.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Print a bundle's header.
    Inspect {
        #[arg(long)]
        bundle: Option<PathBuf>,
        path: Option<PathBuf>,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Prepare => {
            let prepared = cmd_prepare(&cfg)?;
            for split in Split::ALL {
                println!("{:<11}{:>7} examples", split.name(), prepared.split(split).len());
            }
            println!("wrote {}", cfg.prepared_path().display());
        }
        Command::Train { kind, model } => {
            let name = kind
                .or(model)
                .ok_or_else(|| CliError::Usage("train needs a model kind".into()))?;
            let kind: ModelKind = name
                .parse()
                .map_err(|e: ekmanlab::Error| CliError::Usage(e.to_string()))?;
            let (path, report) = cmd_train(&cfg, kind)?;
            println!("trained {kind} in {:.1}s", report.train_seconds);
            for d in &report.degradations {
                println!("note: {d}");
            }
            println!("wrote {}", path.display());
        }
        Command::Evaluate { bundle, split } => {
            let split: Split = split
                .parse()
                .map_err(|e: ekmanlab::Error| CliError::Usage(e.to_string()))?;
            let (report, path) = cmd_evaluate(&cfg, &bundle, split)?;
            print!("{}", report.to_text());
            println!("wrote {}", path.display());
        }
        Command::Compare { reports } => {
            let table = cmd_compare(&cfg, &reports)?;
            print!("{table}");
        }
        Command::Predict { bundle, text } => {
            println!("{}", cmd_predict(&cfg, &bundle, &text)?);
        }
        Command::Serve {
            bundle,
            port,
            cors_origins,
            ui,
        } => {
            let config = ekmanlab_service::ServiceConfig {
                cors_origins,
                ui_dir: ui,
                emoji: cfg.emoji_table()?,
                access_log: true,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Model(e.to_string()))?;
            rt.block_on(ekmanlab_service::serve(&bundle, port, config))
                .map_err(CliError::Model)?;
        }
        Command::Inspect { bundle, path } => {
            let path = bundle
                .or(path)
                .ok_or_else(|| CliError::Usage("inspect needs a bundle path".into()))?;
            let header = modelstore::inspect(&path).map_err(|e| bundle_error(&path, e))?;
            println!("{}", serde_json::to_string_pretty(&header).expect("header serializes"));
        }
    }
    Ok(())
}

fn bundle_error(path: &Path, e: ekmanlab::Error) -> CliError {
    CliError::Model(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// `$SOURCE_DATE_EPOCH` when set, otherwise the current time.
pub fn build_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

pub fn cmd_prepare(cfg: &RunConfig) -> CliResult<PreparedCorpus> {
    let paths = cfg.corpus_paths();
    let corpus = build_corpus(&paths).map_err(|e| CliError::Data(e.to_string()))?;
    let digest = dataset_digest(&paths).map_err(|e| CliError::Data(e.to_string()))?;
    let resources = cfg.resources()?;
    let prepared = PreparedCorpus::from_corpus(&corpus, &resources, &digest);
    write_file(
        &cfg.prepared_path(),
        &serde_json::to_vec(&prepared).expect("serializable"),
    )?;
    write_file(&cfg.out_dir.join(DISTRIBUTION_FILE), &to_json(&prepared.distribution))?;
    Ok(prepared)
}

pub fn load_prepared(cfg: &RunConfig) -> CliResult<PreparedCorpus> {
    let path = cfg.prepared_path();
    if !path.exists() {
        return Err(CliError::Data(format!(
            "{} not found; run `ekmanlab prepare` first",
            path.display()
        )));
    }
    PreparedCorpus::load(&path).map_err(|e| CliError::Data(e.to_string()))
}

pub fn bundle_path(cfg: &RunConfig, kind: ModelKind) -> PathBuf {
    cfg.out_dir.join(format!("{kind}.{}", modelstore::EXTENSION))
}

/// Trains `kind` on the prepared training split of `prepared`.
pub fn train_from_prepared(
    cfg: &RunConfig,
    prepared: &PreparedCorpus,
    kind: ModelKind,
) -> CliResult<(ModelBundle, FitReport)> {
    let resources = cfg.resources()?;
    if resources.digest() != prepared.resources_digest {
        return Err(CliError::Data(
            "normalization resources changed since `prepare`; rerun it".into(),
        ));
    }
    let model = cfg.model_config(kind)?;
    let metadata = BundleMetadata {
        model_name: kind.name().to_string(),
        trained_at: build_timestamp(),
        dataset_digest: prepared.dataset_digest.clone(),
        config: serde_json::json!({ "run": cfg, "model": model }),
    };
    let docs = prepared.docs(Split::Train, cfg.pipeline_mode);
    let labels = prepared.labels(Split::Train);
    train_bundle(
        &docs,
        &labels,
        cfg.pipeline_mode,
        &resources,
        &cfg.tfidf,
        &model,
        metadata,
    )
    .map_err(|e| CliError::Model(e.to_string()))
}

pub fn cmd_train(cfg: &RunConfig, kind: ModelKind) -> CliResult<(PathBuf, FitReport)> {
    let prepared = load_prepared(cfg)?;
    let (bundle, report) = train_from_prepared(cfg, &prepared, kind)?;
    let path = bundle_path(cfg, kind);
    let bytes = bundle.to_bytes().map_err(|e| CliError::Model(e.to_string()))?;
    write_file(&path, &bytes)?;
    write_file(&cfg.out_dir.join(format!("{kind}.fit.json")), &to_json(&report))?;
    Ok((path, report))
}

pub fn evaluate_bundle(bundle: &ModelBundle, prepared: &PreparedCorpus, split: Split) -> CliResult<EvaluationReport> {
    if bundle.pipeline_mode == PipelineMode::Full && bundle.resources.digest() != prepared.resources_digest {
        return Err(CliError::Model(
            "bundle was trained with different normalization resources than the prepared corpus".into(),
        ));
    }
    let docs = prepared.docs(split, bundle.pipeline_mode);
    let x = bundle.tfidf.transform_all(&docs);
    let y = prepared.labels(split);
    evaluate(&bundle.model, &x, &y, &bundle.metadata.model_name, split.name())
        .map_err(|e| CliError::Model(e.to_string()))
}

pub fn cmd_evaluate(cfg: &RunConfig, bundle_file: &Path, split: Split) -> CliResult<(EvaluationReport, PathBuf)> {
    let bundle = modelstore::load(bundle_file).map_err(|e| bundle_error(bundle_file, e))?;
    let prepared = load_prepared(cfg)?;
    let report = evaluate_bundle(&bundle, &prepared, split)?;
    let path = cfg
        .out_dir
        .join(format!("{}.{}.report.json", report.model, report.split));
    write_file(&path, &to_json(&report))?;
    Ok((report, path))
}

/// Writes `comparison.json` and `comparison.csv`; returns the text table.
pub fn cmd_compare(cfg: &RunConfig, report_files: &[PathBuf]) -> CliResult<String> {
    let mut reports = Vec::new();
    for p in report_files {
        let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        let r: EvaluationReport =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        reports.push(r);
    }
    let table = compare(&reports).map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&cfg.out_dir.join("comparison.json"), &to_json(&table))?;
    write_file(&cfg.out_dir.join("comparison.csv"), table.to_csv().as_bytes())?;
    Ok(table.to_text())
}

pub fn cmd_predict(cfg: &RunConfig, bundle_file: &Path, text: &str) -> CliResult<String> {
    let bundle = modelstore::load(bundle_file).map_err(|e| bundle_error(bundle_file, e))?;
    let emoji = cfg.emoji_table()?;
    let response = predict_response(&bundle, text, &emoji).map_err(|e| CliError::Model(e.to_string()))?;
    Ok(serde_json::to_string(&response).expect("response serializes"))
}
