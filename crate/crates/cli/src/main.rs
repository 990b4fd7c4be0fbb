//! `wbamc`: batch front end over the wideband toolkit.
//!
//! Every stage reads and writes documented files only, so each one can be
//! re-run on its own:
//!
//! ```text
//! gen      config.json        -> dataset dir (manifest.json, entries.iq, labels.jsonl)
//! detect   dataset            -> proposals.jsonl
//! train    dataset            -> model.json
//! classify dataset, proposals -> results.jsonl
//! eval     dataset, results   -> report.json
//! plot     report.json        -> SVG charts + CSV tables
//! ```
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unreadable or invalid
//! configuration), 2 data error (corrupt or inconsistent inputs).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod plot;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::Value;
use wbamc::classify::{self, train_centroid, train_linear, Model, ModelFile};
use wbamc::datastore::{
    self, read_dataset, read_proposals, read_results, write_proposals, write_results, Dataset, DatasetWriter,
    Manifest, ProposalRecord, ResultRecord,
};
use wbamc::detect::{Detector, DetectorConfig, DetectorMethod, Proposal};
use wbamc::eval::{map_report, Detection, EntryTruth, MatchConfig};
use wbamc::synth::{generate_entry, GenConfig};

/// Manifest key under which `gen` records the full generator configuration.
const GENERATOR_KEY: &str = "generator";
/// Entries generated per parallel batch before being appended in order.
const GEN_CHUNK: u64 = 256;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

/// A failed command, tagged with the exit code class it maps to.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Data(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<wbamc::Error> for Failure {
    fn from(e: wbamc::Error) -> Self {
        match e {
            wbamc::Error::Param(_) => Failure::Usage(e.into()),
            other => Failure::Data(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn usage(msg: impl fmt::Display) -> Failure {
    Failure::Usage(anyhow::anyhow!("{msg}"))
}

fn data(msg: impl fmt::Display) -> Failure {
    Failure::Data(anyhow::anyhow!("{msg}"))
}

type CmdResult = std::result::Result<(), Failure>;

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "wbamc", version, about = "Wideband multi-signal detection and modulation classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset (or one dataset per sweep point) from a JSON config.
    Gen(GenArgs),
    /// Run a band detector over every entry of a dataset.
    Detect(DetectArgs),
    /// Train a modulation classifier on a dataset's ground-truth bands.
    Train(TrainArgs),
    /// Classify every proposal (or every ground-truth band) of a dataset.
    Classify(ClassifyArgs),
    /// Score proposals or classification results against the labels.
    Eval(EvalArgs),
    /// Render an evaluation report as SVG charts and CSV tables.
    Plot(PlotArgs),
}

#[derive(Debug, clap::Args)]
struct GenArgs {
    /// Generator configuration (JSON); omitted keys take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output dataset directory (the parent directory for `--sweep`).
    #[arg(long)]
    out: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured entry count.
    #[arg(long)]
    count: Option<usize>,
    /// Worker threads (0 = all cores). Output does not depend on this.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Expand into one dataset per SNR point, e.g. `snr=12..30:2`.
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<Sweep>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Energy,
    Mf,
}

#[derive(Debug, clap::Args)]
struct DetectArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Energy)]
    method: MethodArg,
    /// Output proposals file (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Level over the estimated noise floor a band must clear, dB.
    #[arg(long)]
    threshold_db: Option<f64>,
    /// Gaps of at most this many bins between runs are bridged.
    #[arg(long)]
    merge_gap_bins: Option<usize>,
    /// Shortest run, in bins, kept as a proposal.
    #[arg(long)]
    min_run_bins: Option<usize>,
    /// Valley depth, dB, at which a run is split in two (0 disables).
    #[arg(long)]
    split_depth_db: Option<f64>,
    /// IoU above which lower-confidence proposals are suppressed.
    #[arg(long)]
    nms_iou: Option<f64>,
    /// Minimum template correlation for matched-filter peaks.
    #[arg(long)]
    mf_min_score: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassifierArg {
    Centroid,
    Linear,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Linear)]
    classifier: ClassifierArg,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Gradient-descent epochs (linear model only).
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    /// Learning rate (linear model only).
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    /// Pulse roll-off used to infer symbol rates; defaults to the dataset's.
    #[arg(long)]
    rolloff: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct ClassifyArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Proposals file; without it the ground-truth bands are classified.
    #[arg(long)]
    proposals: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Output results file (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Pulse roll-off used to infer symbol rates; defaults to the dataset's.
    #[arg(long)]
    rolloff: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Class-agnostic band detection.
    Detection,
    /// Band and modulation must both be right.
    Joint,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Proposals (detection mode) or classification results.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Detection)]
    mode: ModeArg,
    /// Output report (JSON).
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Svg,
    Csv,
    All,
}

#[derive(Debug, clap::Args)]
struct PlotArgs {
    #[arg(long)]
    report: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::All)]
    format: FormatArg,
}

/// `snr=START..STOP:STEP`, inclusive of `STOP`.
#[derive(Debug, Clone, PartialEq)]
struct Sweep {
    points: Vec<f64>,
}

fn parse_sweep(s: &str) -> std::result::Result<Sweep, String> {
    let spec = s
        .strip_prefix("snr=")
        .ok_or_else(|| format!("`{s}`: only `snr=START..STOP:STEP` sweeps are supported"))?;
    let (range, step) = spec.split_once(':').unwrap_or((spec, "1"));
    let (start, stop) = range
        .split_once("..")
        .ok_or_else(|| format!("`{spec}`: expected START..STOP"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(format!("`{s}`: need finite START <= STOP and STEP > 0"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok(Sweep {
        points: (0..=n).map(|i| start + step * i as f64).collect(),
    })
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn thread_pool(jobs: usize) -> std::result::Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| usage(format!("--jobs {jobs}: {e}")))
}

fn open_dataset(dir: &Path) -> std::result::Result<Dataset, Failure> {
    if !dir.is_dir() {
        return Err(usage(format!("dataset directory {} does not exist", dir.display())));
    }
    Ok(read_dataset(dir)?)
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Roll-off from the flag, else from the generator config recorded in the
/// manifest, else the generator default.
fn resolve_rolloff(flag: Option<f64>, manifest: &Manifest) -> std::result::Result<f64, Failure> {
    let r = flag
        .or_else(|| manifest.extra.get(GENERATOR_KEY)?.get("rolloff")?.as_f64())
        .unwrap_or_else(|| GenConfig::default().rolloff);
    if !(0.0..=1.0).contains(&r) {
        return Err(usage(format!("roll-off {r} outside [0, 1]")));
    }
    Ok(r)
}

fn to_proposal(r: &ProposalRecord) -> Proposal {
    Proposal {
        center_freq: r.center_freq_hz,
        bandwidth: r.bandwidth_hz,
        confidence: r.confidence,
    }
}

/// Group records by entry, rejecting ids the dataset does not contain.
fn group_by_entry<T>(records: Vec<T>, id: impl Fn(&T) -> u64, ds: &Dataset) -> std::result::Result<Vec<Vec<T>>, Failure> {
    let mut out: Vec<Vec<T>> = (0..ds.len()).map(|_| Vec::new()).collect();
    for r in records {
        let k = id(&r);
        let slot = out
            .get_mut(k as usize)
            .ok_or_else(|| data(format!("entry_id {k} not in dataset ({} entries)", ds.len())))?;
        slot.push(r);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn load_config(args: &GenArgs) -> std::result::Result<GenConfig, Failure> {
    require_file(&args.config, "config")?;
    let mut cfg: GenConfig =
        datastore::read_json(&args.config).map_err(|e| Failure::Usage(anyhow::Error::new(e).context("bad config")))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(count) = args.count {
        cfg.entry_count = count;
    }
    cfg.validate().map_err(|e| Failure::Usage(anyhow::Error::new(e).context("bad config")))?;
    Ok(cfg)
}

/// Generate one dataset; returns the per-entry signal counts.
fn generate_into(cfg: &GenConfig, dir: &Path, pool: &rayon::ThreadPool) -> std::result::Result<Vec<usize>, Failure> {
    let mut manifest = Manifest::for_config(cfg);
    let generator = serde_json::to_value(cfg).map_err(data)?;
    manifest.extra.insert(GENERATOR_KEY.to_string(), generator);
    let mut writer = DatasetWriter::create(dir, manifest)?;
    let mut counts = Vec::with_capacity(cfg.entry_count);
    let total = cfg.entry_count as u64;
    let mut start = 0;
    while start < total {
        let end = (start + GEN_CHUNK).min(total);
        let batch: Vec<_> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|k| generate_entry(cfg, k))
                .collect::<wbamc::Result<_>>()
        })?;
        for e in &batch {
            counts.push(e.truths.len());
            writer.push(e)?;
        }
        start = end;
    }
    writer.finish()?;
    Ok(counts)
}

fn print_summary(label: &str, counts: &[usize]) {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max + 1];
    for &c in counts {
        hist[c] += 1;
    }
    let signals: usize = counts.iter().sum();
    println!("{label}: {} entries, {signals} signals", counts.len());
    for (n, h) in hist.iter().enumerate() {
        println!("  {n} signals: {h}");
    }
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let cfg = load_config(&args)?;
    let pool = thread_pool(args.jobs)?;
    match &args.sweep {
        None => {
            let counts = generate_into(&cfg, &args.out, &pool)?;
            print_summary(&args.out.display().to_string(), &counts);
        }
        Some(sweep) => {
            for &snr in &sweep.points {
                let point = GenConfig {
                    snr_grid_db: vec![snr],
                    ..cfg.clone()
                };
                point.validate()?;
                let dir = args.out.join(format!("snr_{snr}"));
                let counts = generate_into(&point, &dir, &pool)?;
                print_summary(&dir.display().to_string(), &counts);
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

fn detector_config(args: &DetectArgs) -> std::result::Result<DetectorConfig, Failure> {
    let mut d = DetectorConfig {
        method: match args.method {
            MethodArg::Energy => DetectorMethod::Energy,
            MethodArg::Mf => DetectorMethod::MatchedFilter,
        },
        ..DetectorConfig::default()
    };
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = args.$field { d.$field = v; })*};
    }
    set!(threshold_db, merge_gap_bins, min_run_bins, split_depth_db, nms_iou, mf_min_score);
    d.validate()?;
    Ok(d)
}

fn cmd_detect(args: DetectArgs) -> CmdResult {
    let det = detector_config(&args)?;
    let pool = thread_pool(args.jobs)?;
    let ds = open_dataset(&args.dataset)?;
    let per_entry: Vec<Vec<ProposalRecord>> = pool.install(|| {
        (0..ds.len())
            .into_par_iter()
            .map(|k| -> wbamc::Result<Vec<ProposalRecord>> {
                let e = ds.entry(k)?;
                Ok(det
                    .detect(&e.iq, e.fs)?
                    .into_iter()
                    .map(|p| ProposalRecord {
                        entry_id: e.entry_id,
                        center_freq_hz: p.center_freq,
                        bandwidth_hz: p.bandwidth,
                        confidence: p.confidence,
                        extra: BTreeMap::new(),
                    })
                    .collect())
            })
            .collect::<wbamc::Result<_>>()
    })?;
    let records: Vec<ProposalRecord> = per_entry.into_iter().flatten().collect();
    write_proposals(&args.out, &records)?;
    println!("{}: {} proposals over {} entries", args.out.display(), records.len(), ds.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn cmd_train(args: TrainArgs) -> CmdResult {
    if matches!(args.classifier, ClassifierArg::Linear) && (!(args.lr > 0.0) || args.epochs == 0) {
        return Err(usage("--lr must be positive and --epochs at least 1"));
    }
    let ds = open_dataset(&args.dataset)?;
    let rolloff = resolve_rolloff(args.rolloff, ds.manifest())?;
    let entries = ds.iter().collect::<wbamc::Result<Vec<_>>>()?;
    let examples = classify::training_examples(entries.iter(), rolloff)?;
    let model = match args.classifier {
        ClassifierArg::Centroid => Model::Centroid(train_centroid(&examples)?),
        ClassifierArg::Linear => {
            let trained = train_linear(&examples, args.epochs, args.lr)?;
            if let (Some(first), Some(last)) = (trained.loss_history.first(), trained.loss_history.last()) {
                println!("loss {first:.4} -> {last:.4} over {} epochs", args.epochs);
            }
            Model::Linear(trained.model)
        }
    };
    let file = ModelFile::new(model);
    // Full precision: model parameters are not canonicalized.
    let text = serde_json::to_string_pretty(&file).map_err(data)? + "\n";
    std::fs::write(&args.out, text).map_err(|e| data(format!("{}: {e}", args.out.display())))?;
    println!("{}: trained on {} examples", args.out.display(), examples.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

fn load_model(path: &Path) -> std::result::Result<Model, Failure> {
    require_file(path, "model")?;
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))?;
    file.validate()?;
    Ok(file.model)
}

fn cmd_classify(args: ClassifyArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    if let Some(p) = &args.proposals {
        require_file(p, "proposals file")?;
    }
    let pool = thread_pool(args.jobs)?;
    let ds = open_dataset(&args.dataset)?;
    let rolloff = resolve_rolloff(args.rolloff, ds.manifest())?;
    let proposals: Vec<Vec<ProposalRecord>> = match &args.proposals {
        Some(path) => group_by_entry(read_proposals(path)?, |r| r.entry_id, &ds)?,
        None => ds
            .labels()
            .iter()
            .map(|l| {
                l.signals
                    .iter()
                    .map(|s| ProposalRecord {
                        entry_id: l.entry_id,
                        center_freq_hz: s.center_freq_hz,
                        bandwidth_hz: s.bandwidth_hz,
                        confidence: 1.0,
                        extra: BTreeMap::new(),
                    })
                    .collect()
            })
            .collect(),
    };
    let per_entry: Vec<Vec<ResultRecord>> = pool.install(|| {
        proposals
            .par_iter()
            .enumerate()
            .map(|(k, recs)| -> wbamc::Result<Vec<ResultRecord>> {
                if recs.is_empty() {
                    return Ok(Vec::new());
                }
                let e = ds.entry(k)?;
                let props: Vec<Proposal> = recs.iter().map(to_proposal).collect();
                let out = classify::classify_proposals(&model, &e.iq, e.fs, &props, rolloff)?;
                Ok(recs
                    .iter()
                    .zip(out)
                    .map(|(r, c)| ResultRecord {
                        entry_id: r.entry_id,
                        center_freq_hz: r.center_freq_hz,
                        bandwidth_hz: r.bandwidth_hz,
                        confidence: r.confidence,
                        modulation: c.modulation,
                        class_scores: c.scores.to_vec(),
                        extra: r.extra.clone(),
                    })
                    .collect())
            })
            .collect::<wbamc::Result<_>>()
    })?;
    let results: Vec<ResultRecord> = per_entry.into_iter().flatten().collect();
    write_results(&args.out, &results)?;
    println!("{}: {} classified bands", args.out.display(), results.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(args: EvalArgs) -> CmdResult {
    require_file(&args.results, "results file")?;
    let ds = open_dataset(&args.dataset)?;
    let preds: Vec<Detection> = match args.mode {
        // Result records carry a superset of the proposal fields.
        ModeArg::Detection => read_proposals(&args.results)?.iter().map(Detection::from).collect(),
        ModeArg::Joint => read_results(&args.results)?.iter().map(Detection::from).collect(),
    };
    let truths: Vec<EntryTruth> = ds.labels().iter().map(EntryTruth::from).collect();
    let m = ds.manifest();
    let cfg = MatchConfig {
        class_agnostic: args.mode == ModeArg::Detection,
        ..MatchConfig::for_capture(m.fs_hz, m.entry_len)
    };
    let report = map_report(&preds, &truths, &cfg)?;
    datastore::write_json(&args.report, &report)?;

    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
    println!(
        "{}: mode {}, {} predictions, {} truths",
        args.report.display(),
        report.mode,
        report.counts.predictions,
        report.counts.truths
    );
    println!("  mAP {}  AP50 {}  AP75 {}", fmt(report.ap_mean), fmt(report.ap50), fmt(report.ap75));
    let ars: Vec<String> = report.ar.iter().map(|(k, v)| format!("AR@{k} {}", fmt(*v))).collect();
    println!("  {}", ars.join("  "));
    if report.accuracy.is_some() {
        println!("  accuracy {}", fmt(report.accuracy));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

fn cmd_plot(args: PlotArgs) -> CmdResult {
    require_file(&args.report, "report")?;
    let text = std::fs::read_to_string(&args.report).map_err(|e| data(format!("{}: {e}", args.report.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", args.report.display())))?;
    let report = serde_json::from_value(value).map_err(|e| data(format!("{}: not a report: {e}", args.report.display())))?;
    let written = plot::render(&report, &args.out, args.format != FormatArg::Csv, args.format != FormatArg::Svg)?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Train(a) => cmd_train(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
