//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{parse_dataset, Dataset, ParseOptions};
use crate::error::{Error, Result};
use crate::eval::{self, F1Mode};
use crate::mips::{
    self, audit_inexactness, BackendKind, IndexParams, LshFallback, LshParams, SwGraphParams,
};
use crate::model_io::{load_model, save_model, Model, ModelFormat};
use crate::synth::{synthetic, SynthConfig};
use crate::train::{self, Algorithm, EarlyStop, TrainConfig, Truncation};

#[derive(Debug, Parser)]
#[command(
    name = "memoir",
    version,
    about = "Extreme multi-class linear SVMs with inexact margins"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a LIBSVM-style dataset.
    Train(TrainArgs),
    /// Write one predicted class name per input line.
    Predict(PredictArgs),
    /// Accuracy and macro-F1 of a model on a labeled set.
    Eval(EvalArgs),
    /// Measure how far index-selected rivals are from exact ones.
    Audit(AuditArgs),
    /// Train on generated data and report timings.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    L2,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Exact,
    Simplelsh,
    Swgraph,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Exact => BackendKind::Exact,
            BackendArg::Simplelsh => BackendKind::SimpleLsh,
            BackendArg::Swgraph => BackendKind::SwGraph,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Binary,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TruncationArg {
    Off,
    Always,
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum F1Arg {
    Harmonic,
    MeanF1,
}

impl From<F1Arg> for F1Mode {
    fn from(f: F1Arg) -> Self {
        match f {
            F1Arg::Harmonic => F1Mode::Harmonic,
            F1Arg::MeanF1 => F1Mode::MeanF1,
        }
    }
}

/// Index parameters shared by `train`, `audit` and `bench`. Left unset,
/// the defaults apply.
#[derive(Debug, Clone, Args)]
struct IndexArgs {
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendArg,
    /// Bits per SimpleLSH code [default: 64].
    #[arg(long)]
    lsh_bits: Option<usize>,
    /// SimpleLSH hash tables [default: 32].
    #[arg(long)]
    lsh_tables: Option<usize>,
    /// Re-rank this many rows by Hamming distance instead of scanning all
    /// rows when no bucket matches.
    #[arg(long)]
    lsh_hamming_fallback: Option<usize>,
    /// SW-Graph neighbors per node [default: 16].
    #[arg(long)]
    swg_m: Option<usize>,
    /// SW-Graph search beam [default: 64].
    #[arg(long)]
    swg_ef_search: Option<usize>,
    /// SW-Graph construction beam [default: 100].
    #[arg(long)]
    swg_ef_construction: Option<usize>,
}

impl IndexArgs {
    fn resolve(&self) -> (BackendKind, LshParams, SwGraphParams) {
        let kind = BackendKind::from(self.backend);
        let lsh_given = self.lsh_bits.is_some()
            || self.lsh_tables.is_some()
            || self.lsh_hamming_fallback.is_some();
        let swg_given = self.swg_m.is_some()
            || self.swg_ef_search.is_some()
            || self.swg_ef_construction.is_some();
        if lsh_given && kind != BackendKind::SimpleLsh {
            eprintln!("warning: --lsh-* flags are ignored with --backend {kind}");
        }
        if swg_given && kind != BackendKind::SwGraph {
            eprintln!("warning: --swg-* flags are ignored with --backend {kind}");
        }
        let mut lsh = LshParams::default();
        let mut swg = SwGraphParams::default();
        if kind == BackendKind::SimpleLsh {
            lsh.bits = self.lsh_bits.unwrap_or(lsh.bits);
            lsh.tables = self.lsh_tables.unwrap_or(lsh.tables);
            if let Some(k) = self.lsh_hamming_fallback {
                lsh.fallback = LshFallback::Hamming(k);
            }
        }
        if kind == BackendKind::SwGraph {
            swg.m = self.swg_m.unwrap_or(swg.m);
            swg.ef_search = self.swg_ef_search.unwrap_or(swg.ef_search);
            swg.ef_construction = self.swg_ef_construction.unwrap_or(swg.ef_construction);
        }
        (kind, lsh, swg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training data.
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_enum, default_value = "l2")]
    algo: AlgoArg,
    #[command(flatten)]
    index: IndexArgs,
    /// Regularization strength [default: 1 for l2, 1e-6 for l1].
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eta0: f64,
    #[arg(long, default_value_t = 0.02)]
    eta_step: f64,
    /// Number of batch steps.
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    /// Examples per step [default: round(100·sqrt(C))].
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "always")]
    truncation: TruncationArg,
    /// Maximum fraction of a row's ℓ1 mass a conditional truncation may
    /// remove.
    #[arg(long, default_value_t = 0.5)]
    truncation_fraction: f64,
    /// Heldout set for per-epoch metrics.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Stop when heldout macro-F1 stalls for this many epochs.
    #[arg(long)]
    early_stop: Option<usize>,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    model_format: FormatArg,
    /// Tab-separated per-epoch log.
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Feature ids in the data files start at 0.
    #[arg(long)]
    zero_based: bool,
    #[arg(long, value_enum, default_value = "harmonic")]
    f1_mode: F1Arg,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    zero_based: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    zero_based: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "harmonic")]
    f1_mode: F1Arg,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    zero_based: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 50)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    dim: usize,
    #[arg(long, default_value_t = 5000)]
    examples: usize,
    /// Fraction of the generated examples used for training.
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, value_enum, default_value = "l2")]
    algo: AlgoArg,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Backends to compare.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "exact,simplelsh,swgraph"
    )]
    backends: Vec<BackendArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the generated data (LIBSVM format, 1-based).
    #[arg(long)]
    write_data: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::InvalidConfig("threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::invalid(e.to_string()))?;
    println!("{line}");
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::file(path, e))?,
    ))
}

/// Parses data against an existing model: same dimension, model label ids
/// first, unseen labels appended.
fn parse_for_model(path: &Path, model: &Model, zero_based: bool) -> Result<Dataset> {
    let opts = ParseOptions {
        zero_based,
        dim: Some(model.dim()),
        num_classes: Some(model.num_classes()),
        labels: Some(model.labels.clone()),
    };
    let (data, stats) = parse_dataset(path, &opts)?;
    if stats.dropped_features > 0 {
        eprintln!(
            "warning: {}: dropped {} features beyond dimension {}",
            path.display(),
            stats.dropped_features,
            model.dim()
        );
    }
    if data.num_classes() > model.num_classes() {
        eprintln!(
            "warning: {}: {} labels unknown to the model",
            path.display(),
            data.num_classes() - model.num_classes()
        );
    }
    Ok(data)
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    stopped_early: bool,
    objective: f64,
    heldout_acc: Option<f64>,
    heldout_maf1: Option<f64>,
    nnz: usize,
    seconds: f64,
    model: String,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let algorithm = match a.algo {
        AlgoArg::L2 => Algorithm::L2,
        AlgoArg::L1 => Algorithm::L1,
    };
    let (backend, lsh, swg) = a.index.resolve();
    let mut cfg = TrainConfig::new(algorithm);
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    cfg.eta0 = a.eta0;
    cfg.eta_step = a.eta_step;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.rho = a.rho;
    cfg.backend = backend;
    cfg.lsh = lsh;
    cfg.swg = swg;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    cfg.f1_mode = a.f1_mode.into();
    cfg.truncation = match a.truncation {
        TruncationArg::Off => Truncation::Off,
        TruncationArg::Always => Truncation::Always,
        TruncationArg::Conditional => Truncation::Conditional(a.truncation_fraction),
    };
    if algorithm == Algorithm::L2 && a.truncation != TruncationArg::Always {
        eprintln!("warning: --truncation is ignored with --algo l2");
    }
    cfg.early_stop = a.early_stop.map(|patience| EarlyStop {
        patience,
        ..EarlyStop::default()
    });
    cfg.validate()?;

    let opts = ParseOptions {
        zero_based: a.zero_based,
        ..ParseOptions::default()
    };
    let (data, _) = parse_dataset(&a.train, &opts)?;
    let heldout = match &a.heldout {
        Some(p) => {
            let opts = ParseOptions {
                zero_based: a.zero_based,
                dim: Some(data.dim()),
                num_classes: Some(data.num_classes()),
                labels: Some(data.labels().clone()),
            };
            let (h, stats) = parse_dataset(p, &opts)?;
            if stats.dropped_features > 0 {
                eprintln!(
                    "warning: {}: dropped {} features unseen in training",
                    p.display(),
                    stats.dropped_features
                );
            }
            Some(h)
        }
        None => None,
    };

    let outcome = train::train(&data, heldout.as_ref(), &cfg, None)?;
    if let Some(p) = &a.log_out {
        let mut out = create(p)?;
        outcome.log.write_tsv(&mut out)?;
        out.flush().map_err(|e| Error::file(p, e))?;
    }
    let model = Model::new(
        outcome.weights,
        data.labels().clone(),
        cfg.lambda,
        algorithm,
    )?;
    let format = match a.model_format {
        FormatArg::Binary => ModelFormat::Binary,
        FormatArg::Text => ModelFormat::Text,
    };
    save_model(&a.model_out, &model, format)?;

    let last = outcome.log.last().expect("at least one epoch");
    print_json(&TrainSummary {
        epochs: outcome.log.len(),
        stopped_early: outcome.log.stopped_early,
        objective: last.objective,
        heldout_acc: last.heldout_acc,
        heldout_maf1: last.heldout_maf1,
        nnz: last.nnz,
        seconds: last.seconds,
        model: a.model_out.display().to_string(),
    })
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = parse_for_model(&a.input, &model, a.zero_based)?;
    let predicted = with_threads(a.threads, || eval::predict_all(&model.weights, &data))?;
    let mut out = create(&a.output)?;
    for c in predicted {
        writeln!(out, "{}", model.labels.name(c).expect("model class"))?;
    }
    out.flush().map_err(|e| Error::file(&a.output, e))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = parse_for_model(&a.test, &model, a.zero_based)?;
    let mode = F1Mode::from(a.f1_mode);
    let report = with_threads(a.threads, || eval::evaluate(&model.weights, &data, mode))?;
    print_json(&report)
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = parse_for_model(&a.queries, &model, a.zero_based)?;
    let known: Vec<usize> = (0..data.len())
        .filter(|&i| data.examples()[i].label < model.num_classes())
        .collect();
    if known.len() < data.len() {
        eprintln!(
            "warning: skipping {} queries whose label the model does not know",
            data.len() - known.len()
        );
    }
    let queries = data.subset(&known);
    let (kind, lsh, swg) = a.index.resolve();
    let params = IndexParams {
        kind,
        lsh,
        swg,
        seed: a.seed,
    };
    let w = &model.weights;
    let rows = (0..w.num_classes())
        .map(|c| Ok((c, w.materialize_row(c)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = with_threads(a.threads, || {
        let index = mips::build(rows, w.dim(), &params)?;
        audit_inexactness(&index, w, &queries, a.epsilon)
    })?;
    print_json(&report)
}

#[derive(Serialize)]
struct BenchRecord {
    backend: String,
    algorithm: String,
    epochs: usize,
    train_seconds: f64,
    test_accuracy: f64,
    test_macro_f1: f64,
    predict_seconds: f64,
    nnz: usize,
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let data = synthetic(&SynthConfig {
        classes: a.classes,
        dim: a.dim,
        examples: a.examples,
        seed: a.seed,
        ..SynthConfig::default()
    })?;
    if let Some(p) = &a.write_data {
        crate::data::write_dataset_file(p, &data, false)?;
    }
    let (train_set, test_set) = data.split(a.train_fraction, a.seed);
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::invalid(
            "train fraction leaves an empty train or test set",
        ));
    }
    let algorithm = match a.algo {
        AlgoArg::L2 => Algorithm::L2,
        AlgoArg::L1 => Algorithm::L1,
    };
    for &b in &a.backends {
        let mut cfg = TrainConfig::new(algorithm);
        if let Some(l) = a.lambda {
            cfg.lambda = l;
        }
        cfg.epochs = a.epochs;
        cfg.batch_size = a.batch_size;
        cfg.backend = b.into();
        cfg.seed = a.seed;
        cfg.threads = a.threads;
        let start = Instant::now();
        let outcome = train::train(&train_set, None, &cfg, None)?;
        let train_seconds = start.elapsed().as_secs_f64();
        let report = with_threads(a.threads, || {
            eval::evaluate(&outcome.weights, &test_set, F1Mode::Harmonic)
        })?;
        print_json(&BenchRecord {
            backend: cfg.backend.to_string(),
            algorithm: algorithm.to_string(),
            epochs: outcome.log.len(),
            train_seconds,
            test_accuracy: report.accuracy,
            test_macro_f1: report.macro_f1,
            predict_seconds: report.predict_seconds,
            nnz: outcome.weights.nnz(),
        })?;
    }
    Ok(())
}
