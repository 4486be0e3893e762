//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] (defaults, then `--config`, then
//! flags), writes its outputs into `--out` together with a
//! `run-manifest.json`, and maps failures to exit codes: 2 for configuration
//! errors, 3 for data errors, 4 for everything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cnn::{layer_outputs, write_layer_csv, CnnModel};
use crate::config::{config_reference, ModelKind, RunConfig};
use crate::error::Error;
use crate::eval::{
    averaging_eval, bench_timing, fit_on_first_fold, run_benchmark, splits_for, BenchmarkOptions, TrainedModel,
};
use crate::features::{FeatureConfig, FeatureKind, WmConfig};
use crate::ingest::{import_csv, read_epb, synthesize, write_epb, EpochSet, NON_TARGET, TARGET};
use crate::metrics::compute_metrics;
use crate::preprocess::preprocess_epochs;

#[derive(Debug, Parser)]
#[command(
    name = "p300bench",
    version,
    about = "Single-trial P300 classification benchmark",
    after_long_help = long_help()
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Master seed for splits, synthesis and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Input file (EPB; CSV for `import`).
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Models to train or evaluate.
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelArg>,
    /// Windowed-means window in ms, e.g. `300-1000`.
    #[arg(long, global = true, value_parser = parse_window)]
    pub window: Option<(f64, f64)>,
    /// Largest trial-averaging group size.
    #[arg(long, global = true)]
    pub avg_max: Option<usize>,
    /// Layer index for `inspect`.
    #[arg(long, global = true)]
    pub layer: Option<usize>,
    /// Worker threads for evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Number of cross-validation iterations.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Lda,
    Svm,
    Cnn,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic epoch set (`synth.epb`).
    Synth,
    /// Convert CSV epochs plus a label file into `imported.epb`.
    Import {
        /// One label (0 or 1) per line.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Baseline-correct and artifact-reject epochs (`preprocessed.epb`).
    Preprocess,
    /// Extract windowed-means features (`features.csv`).
    Features,
    /// Fit models on the first cross-validation fold (`models/*.json`).
    Train,
    /// Run the full cross-validation and holdout protocol.
    Eval,
    /// Trial-averaging study with models saved by `train`.
    AvgEval {
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
    },
    /// Export averaged hidden-layer outputs of a saved CNN.
    Inspect {
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
    },
    /// Training and prediction timings.
    Bench {
        /// Single-epoch prediction calls per model.
        #[arg(long, default_value_t = 1000)]
        calls: usize,
    },
    /// Print the resolved configuration as TOML.
    Config,
}

impl Command {
    pub fn stage(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Import { .. } => "import",
            Command::Preprocess => "preprocess",
            Command::Features => "features",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::AvgEval { .. } => "avg-eval",
            Command::Inspect { .. } => "inspect",
            Command::Bench { .. } => "bench",
            Command::Config => "config",
        }
    }
}

fn long_help() -> String {
    format!("Configuration keys and defaults (TOML, flags override):\n{}", config_reference())
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(['-', ':', ','])
        .ok_or_else(|| format!("expected START-END in ms, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad window end `{b}`"))?;
    if b <= a {
        return Err(format!("window end {b} must exceed start {a}"));
    }
    Ok((a, b))
}

/// Exit code class of an error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::WindowOutOfRange { .. } | Error::InvalidLayer { .. } => 2,
        Error::UnrecognizedContainer
        | Error::CorruptFile(_)
        | Error::InvalidAmplitude { .. }
        | Error::Csv { .. }
        | Error::Io { .. }
        | Error::DimensionMismatch { .. }
        | Error::TooFewEpochs(_)
        | Error::NeedTwoClasses
        | Error::Serde(_)
        | Error::InsufficientSamples { .. } => 3,
        _ => 4,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        2 => "config",
        3 => "data",
        _ => "runtime",
    }
}

/// `error stage=<stage> kind=<config|data|runtime> message="<text>"`
pub fn error_line(stage: &str, e: &Error) -> String {
    let msg = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    format!("error stage={stage} kind={} message=\"{msg}\"", error_kind(e))
}

/// Applies the config file and flags on top of the defaults.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &common.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &common.out {
        cfg.output = p.clone();
    }
    if let Some(m) = common.model {
        cfg.models = match m {
            ModelArg::Lda => vec![ModelKind::Lda],
            ModelArg::Svm => vec![ModelKind::Svm],
            ModelArg::Cnn => vec![ModelKind::Cnn],
            ModelArg::All => ModelKind::ALL.to_vec(),
        };
    }
    if let Some((a, b)) = common.window {
        cfg.features = FeatureConfig {
            kind: FeatureKind::Wm,
            wm: WmConfig {
                window_start_ms: a,
                window_end_ms: b,
                ..cfg.features.wm
            },
        };
    }
    if let Some(k) = common.avg_max {
        cfg.averaging.k_max = k;
    }
    if let Some(l) = common.layer {
        cfg.inspect_layer = l;
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if let Some(i) = common.iterations {
        cfg.split.cv_iterations = i;
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    config: &'a RunConfig,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, Error> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn manifest(&mut self, command: &str, cfg: &RunConfig, inputs: Vec<PathBuf>) -> Result<(), Error> {
        let path = self.dir.join("run-manifest.json");
        self.files.sort();
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            inputs,
            outputs: self.files.clone(),
            config: cfg,
        };
        std::fs::write(&path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&path, e))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// The configured input set, or a synthetic one when no input is given.
fn load_or_synthesize(cfg: &RunConfig) -> Result<(EpochSet, Vec<PathBuf>), Error> {
    match &cfg.input {
        Some(p) => Ok((read_epb(p)?, vec![p.clone()])),
        None => {
            log::info!("no --in given, using a synthetic set");
            Ok((synthesize(&cfg.synth)?, Vec::new()))
        }
    }
}

fn require_input(cfg: &RunConfig) -> Result<PathBuf, Error> {
    cfg.input
        .clone()
        .ok_or_else(|| Error::InvalidConfig("this command needs --in".into()))
}

fn model_file(kind: &str) -> String {
    format!("models/{kind}.json")
}

fn load_models(dir: &Path, cfg: &RunConfig) -> Result<Vec<TrainedModel>, Error> {
    let mut out = Vec::new();
    for k in &cfg.models {
        let path = dir.join(model_file(k.as_str()));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.push(serde_json::from_str(&text)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct HoldoutRow {
    model: String,
    accuracy: f64,
    precision: f64,
    recall: f64,
    auc: Option<f64>,
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<(), Error> {
    if let Command::Config = command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let mut out = Outputs::new(&cfg.output)?;
    let stage = command.stage();
    match command {
        Command::Config => unreachable!(),
        Command::Synth => {
            let set = synthesize(&cfg.synth)?;
            write_epb(&set, out.path("synth.epb"))?;
            out.manifest(stage, cfg, Vec::new())?;
        }
        Command::Import { labels } => {
            let data = require_input(cfg)?;
            let labels = labels
                .clone()
                .or_else(|| cfg.labels.clone())
                .ok_or_else(|| Error::InvalidConfig("import needs --labels".into()))?;
            let set = import_csv(&data, &labels, &cfg.import)?;
            write_epb(&set, out.path("imported.epb"))?;
            out.manifest(stage, cfg, vec![data, labels])?;
        }
        Command::Preprocess => {
            let input = require_input(cfg)?;
            let set = read_epb(&input)?;
            let (clean, report) = preprocess_epochs(&set, &cfg.preprocess)?;
            write_epb(&clean, out.path("preprocessed.epb"))?;
            write_json(&out.path("rejection.json"), &report)?;
            println!(
                "rejected {} of {} epochs ({:.2} %)",
                report.n_rejected,
                report.n_input,
                100.0 * report.rejection_rate
            );
            out.manifest(stage, cfg, vec![input])?;
        }
        Command::Features => {
            let (set, inputs) = load_or_synthesize(cfg)?;
            let fm = cfg.features.extract(&set)?;
            fm.write_csv(out.path("features.csv"))?;
            out.manifest(stage, cfg, inputs)?;
        }
        Command::Train => {
            let (set, inputs) = load_or_synthesize(cfg)?;
            let specs = cfg.model_specs();
            let (models, holdout) = fit_on_first_fold(&set, &specs, &cfg.split)?;
            std::fs::create_dir_all(cfg.output.join("models")).map_err(|e| Error::io(&cfg.output, e))?;
            let mut rows = Vec::new();
            for (spec, model) in specs.iter().zip(&models) {
                write_json(&out.path(&model_file(model.kind())), model)?;
                if let TrainedModel::Cnn { model: cnn } = model {
                    cnn.write_training_log(&out.path("training_log.csv"))?;
                }
                let m = compute_metrics(&model.score(&holdout)?, holdout.labels(), model.threshold());
                rows.push(HoldoutRow {
                    model: spec.name(),
                    accuracy: m.accuracy,
                    precision: m.precision,
                    recall: m.recall,
                    auc: m.auc,
                });
            }
            write_json(&out.path("holdout.json"), &rows)?;
            for r in &rows {
                println!("{:<16} holdout accuracy {:.4}", r.model, r.accuracy);
            }
            out.manifest(stage, cfg, inputs)?;
        }
        Command::Eval => {
            let (set, inputs) = load_or_synthesize(cfg)?;
            let opts = BenchmarkOptions {
                averaging: cfg.averaging,
                parallel: true,
            };
            let report = run_benchmark(&set, &cfg.model_specs(), &cfg.split, &opts)?;
            report.write_all(&cfg.output)?;
            for f in ["report.json", "timings.json", "iterations.csv", "aggregate.csv", "averaging.csv"] {
                out.files.push(f.into());
            }
            for m in &report.models {
                let v = &m.validation_summary.accuracy;
                let h = &m.holdout_summary.accuracy;
                println!(
                    "{:<16} validation {:.4} ± {:.4}   holdout {:.4} ± {:.4}",
                    m.name, v.mean, v.sd, h.mean, h.sd
                );
            }
            out.manifest(stage, cfg, inputs)?;
        }
        Command::AvgEval { models } => {
            let (set, mut inputs) = load_or_synthesize(cfg)?;
            let trained = load_models(models, cfg)?;
            let splits = splits_for(&set, &cfg.split)?;
            let holdout = set.subset(&splits.holdout);
            let table = averaging_eval(&trained, &holdout, cfg.averaging.k_max, cfg.averaging.within_subject)?;
            let path = out.path("averaging.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
            w.write_record(["model", "k", "accuracy", "precision", "recall", "auc"])
                .map_err(|e| csv_error(&path, e))?;
            for (model, per_k) in trained.iter().zip(&table) {
                for (k, m) in per_k.iter().enumerate() {
                    let cells = match m {
                        Some(m) => [
                            m.accuracy.to_string(),
                            m.precision.to_string(),
                            m.recall.to_string(),
                            m.auc.map(|a| a.to_string()).unwrap_or_default(),
                        ],
                        None => Default::default(),
                    };
                    let mut rec = vec![model.kind().to_string(), (k + 1).to_string()];
                    rec.extend(cells);
                    w.write_record(&rec).map_err(|e| csv_error(&path, e))?;
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            inputs.push(models.clone());
            out.manifest(stage, cfg, inputs)?;
        }
        Command::Inspect { models } => {
            let (set, mut inputs) = load_or_synthesize(cfg)?;
            let path = models.join(model_file("cnn"));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let cnn: CnnModel = match serde_json::from_str(&text)? {
                TrainedModel::Cnn { model } => model,
                _ => return Err(Error::InvalidConfig(format!("{} is not a CNN", path.display()))),
            };
            let splits = splits_for(&set, &cfg.split)?;
            let holdout = set.subset(&splits.holdout);
            let layer = cfg.inspect_layer;
            for (class, name) in [(TARGET, "target"), (NON_TARGET, "nontarget")] {
                let idx: Vec<usize> = (0..holdout.n_epochs()).filter(|&i| holdout.labels()[i] == class).collect();
                let map = layer_outputs(&cnn, &holdout.subset(&idx), layer)?;
                write_layer_csv(&map, &out.path(&format!("layer{layer}_{name}.csv")))?;
            }
            inputs.push(path);
            out.manifest(stage, cfg, inputs)?;
        }
        Command::Bench { calls } => {
            let (set, inputs) = load_or_synthesize(cfg)?;
            let report = bench_timing(&cfg.model_specs(), &set, &cfg.split, *calls)?;
            write_json(&out.path("timing.json"), &report)?;
            for m in &report.models {
                println!(
                    "{:<16} train {:>10.4} s   predict {:>10.3} ms/pattern",
                    m.name,
                    m.train_seconds,
                    1e3 * m.predict_median_seconds
                );
            }
            if let Some(s) = &report.lda_scaling {
                println!("lda batch prediction scaling: r2 = {:.4}", s.r2);
            }
            out.manifest(stage, cfg, inputs)?;
        }
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    }
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let stage = cli.command.stage();
    let result = resolve_config(&cli.common).and_then(|cfg| {
        if let Some(t) = cfg.threads {
            // only the first call in a process can size the global pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
        execute(&cli.command, &cfg)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(stage, &e));
            exit_code(&e)
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(run(Cli::parse()))
}
