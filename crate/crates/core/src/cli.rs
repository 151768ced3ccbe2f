//! Command-line entry point. `run` parses arguments, dispatches to one
//! subcommand and maps the outcome to an exit code: 0 on success, 1 for
//! usage or input problems, 2 for internal failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{compare_report, evaluate_model, fit_baseline, incremental_sensor_experiment, EvalReport, Forecaster, ResultRow};
use crate::eval::report::{rows_from_csv, rows_from_json};
use crate::ingest::{
    load_bundle, load_dense_matrix, load_distances, load_duration_matrix, load_locations, load_sensor_ids,
    save_bundle, validate_bundle, DatasetBundle, DEFAULT_KAPPA,
};
use crate::matrix::Unit;
use crate::models::{load_model, save_model, toy_dataset, ModelConfig, ModelKind, TrainConfig};
use crate::pipeline::{
    load_trips, locality_coverage, run_pipeline, FixtureProvider, HttpProvider, PipelineConfig, RoadNetworkProvider,
    DEFAULT_EPS_M, DEFAULT_MIN_PTS,
};
use crate::stats::{analyze_sensor, AnalysisConfig, AnovaGrouping};
use crate::synth::{fill_all, SynthConfig, RNG_ALGORITHM};
use crate::types::{parse_hhmm, IntervalWidth, SensorId};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "tempograph", version, about = "Traffic dataset construction, analysis and graph forecasting")]
struct Cli {
    /// Write a run manifest (flags, input and output hashes) to this file.
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assemble and validate a dataset bundle from loose files or an existing bundle.
    Ingest(IngestArgs),
    /// Turn trip recordings into a duration-matrix bundle.
    Pipeline(PipelineArgs),
    /// Fill missing cells of a bundle's matrix.
    Synth(SynthArgs),
    /// Stationarity, ARIMA, ANOVA, boxplots and peaks for one sensor.
    Analyze(AnalyzeArgs),
    /// Train a DCRNN or STGCN forecaster.
    Train(TrainArgs),
    /// Score a trained model or the historical-average baseline on the test days.
    Eval(EvalArgs),
    /// Merge stored result rows into a comparison table.
    Report(ReportArgs),
    /// Write the synthetic four-sensor toy bundle.
    Toy(ToyArgs),
    /// Train on growing prefixes of the sensor list.
    Incremental(IncrementalArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Existing bundle directory to validate and rewrite.
    #[arg(long, conflicts_with_all = ["registry", "distances", "matrix"])]
    bundle: Option<PathBuf>,
    /// Sensor id list, one per line.
    #[arg(long, requires_all = ["distances", "matrix"])]
    registry: Option<PathBuf>,
    #[arg(long)]
    distances: Option<PathBuf>,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    locations: Option<PathBuf>,
    /// Matrix file is dense (one row per sensor-day).
    #[arg(long)]
    dense: bool,
    #[arg(long, default_value_t = 5)]
    width: u32,
    /// duration_seconds or speed_kmh.
    #[arg(long, default_value = "duration_seconds")]
    unit: String,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value = "dataset")]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// JSON-lines trip file.
    #[arg(long)]
    trips: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPS_M)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_PTS)]
    min_pts: usize,
    /// fixture:<file> or http:<url>.
    #[arg(long)]
    provider: String,
    #[arg(long, default_value_t = 5)]
    width: u32,
    /// First day of the matrix (YYYY-MM-DD); defaults to the earliest trip.
    #[arg(long)]
    origin: Option<String>,
    #[arg(long, default_value = "pipeline")]
    name: String,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, default_value_t = 3)]
    min_support: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    sensor: String,
    /// Time of day, HH:MM.
    #[arg(long)]
    interval: String,
    /// hourly or interval.
    #[arg(long, default_value = "hourly")]
    anova_groups: String,
    #[arg(long, default_value_t = 2)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelFlags {
    /// dcrnn or stgcn.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 50)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    history: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.7,0.1,0.2")]
    split: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Model directory or `baseline:ha`.
    #[arg(long)]
    model: String,
    #[arg(long, default_value = "0.7,0.1,0.2")]
    split: String,
    /// Baseline history length.
    #[arg(long, default_value_t = 12)]
    history: usize,
    /// Baseline horizon length.
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; the extension (txt, json or csv) picks the format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation reports, row lists (JSON) or long-format CSV files.
    #[arg(long, num_args = 1.., required = true)]
    merge: Vec<PathBuf>,
    /// Output file (txt, json or csv); text goes to standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Share of cells to delete after generation.
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IncrementalArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    /// Comma-separated sensor counts.
    #[arg(long)]
    counts: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Manifest written by an earlier run.
    file: PathBuf,
    /// Fail unless every output hashes as recorded.
    #[arg(long)]
    check: bool,
}

/// What a run consumed and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, `--manifest` removed.
    pub flags: Vec<String>,
    /// Path to hex SHA-256; directories contribute one entry per file.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Default)]
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
}

/// Parses `argv` (program name first) and runs it.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

fn execute(cli: Cli, argv: &[OsString]) -> Result<()> {
    let name = command_name(&cli.command);
    let outcome = match cli.command {
        Command::Ingest(a) => ingest(a)?,
        Command::Pipeline(a) => pipeline(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Analyze(a) => analyze(a)?,
        Command::Train(a) => train(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Report(a) => report(a)?,
        Command::Toy(a) => toy(a)?,
        Command::Incremental(a) => incremental(a)?,
        Command::Replay(a) => return replay(a),
    };
    if let Some(path) = cli.manifest {
        let manifest = RunManifest {
            command: name.to_string(),
            flags: strip_manifest_flag(argv),
            inputs: hash_all(&outcome.inputs)?,
            seed: outcome.seed,
            tool_version: TOOL_VERSION.to_string(),
            outputs: hash_all(&outcome.outputs)?,
        };
        write_json(&path, &manifest)?;
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Pipeline(_) => "pipeline",
        Command::Synth(_) => "synth",
        Command::Analyze(_) => "analyze",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Report(_) => "report",
        Command::Toy(_) => "toy",
        Command::Incremental(_) => "incremental",
        Command::Replay(_) => "replay",
    }
}

fn strip_manifest_flag(argv: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--manifest" {
            it.next();
        } else if !a.starts_with("--manifest=") {
            out.push(a);
        }
    }
    out
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_all(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(p, err)))
                .collect::<Result<_>>()?;
            entries.sort();
            for f in entries.into_iter().filter(|f| f.is_file()) {
                out.insert(f.display().to_string(), sha256_file(&f)?);
            }
        } else {
            out.insert(p.display().to_string(), sha256_file(p)?);
        }
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    write_text(path, &(text + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_unit(s: &str) -> Result<Unit> {
    match s {
        "duration_seconds" | "seconds" => Ok(Unit::DurationSeconds),
        "speed_kmh" | "kmh" => Ok(Unit::SpeedKmh),
        other => Err(Error::validation(format!("unknown unit '{other}' (expected duration_seconds or speed_kmh)"))),
    }
}

fn parse_split(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::validation(format!("split '{s}' must be three comma-separated numbers")))?;
    match parts[..] {
        [a, b, c] if a > 0.0 && b > 0.0 && c > 0.0 && ((a + b + c) - 1.0).abs() < 1e-9 => Ok((a, b, c)),
        _ => Err(Error::validation(format!("split '{s}' must be three positive fractions summing to 1"))),
    }
}

fn parse_counts(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::validation(format!("'{p}' in --counts is not a sensor count")))
        })
        .collect()
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        log::info!("no --seed given; using {DEFAULT_SEED}");
        DEFAULT_SEED
    })
}

fn reject_findings(bundle: &DatasetBundle) -> Result<()> {
    let findings = validate_bundle(bundle);
    for f in &findings {
        eprintln!("finding: {f}");
    }
    if findings.is_empty() {
        Ok(())
    } else {
        Err(Error::validation(format!("bundle '{}' has {} validation findings", bundle.name, findings.len())))
    }
}

fn ingest(a: IngestArgs) -> Result<Outcome> {
    let mut inputs = Vec::new();
    let bundle = if let Some(dir) = &a.bundle {
        inputs.push(dir.clone());
        load_bundle(dir)?
    } else {
        let (Some(reg), Some(dist), Some(mat)) = (&a.registry, &a.distances, &a.matrix) else {
            return Err(Error::validation("ingest needs --bundle or all of --registry, --distances, --matrix"));
        };
        inputs.extend([reg.clone(), dist.clone(), mat.clone()]);
        let unit = parse_unit(&a.unit)?;
        let registry = load_sensor_ids(reg)?;
        let distances = load_distances(dist, &registry)?;
        let matrix = if a.dense {
            load_dense_matrix(mat, &registry, unit)?
        } else {
            load_duration_matrix(mat, &registry, IntervalWidth::new(a.width)?, unit, a.days)?
        };
        let locations = match &a.locations {
            Some(p) => {
                inputs.push(p.clone());
                Some(load_locations(p, &registry)?)
            }
            None => None,
        };
        DatasetBundle::new(a.name.clone(), registry, distances, a.kappa, matrix, locations)?
    };
    reject_findings(&bundle)?;
    eprintln!(
        "{}: {} sensors, {} days, completeness {:.4}, {} graph edges",
        bundle.name,
        bundle.registry.len(),
        bundle.matrix.num_days(),
        bundle.matrix.completeness(),
        bundle.graph.edges().len()
    );
    let outputs = save_bundle(&a.out, &bundle, None)?;
    Ok(Outcome { inputs, outputs, seed: None })
}

fn pipeline(a: PipelineArgs) -> Result<Outcome> {
    let mut inputs = vec![a.trips.clone(), a.registry.clone()];
    let provider: Box<dyn RoadNetworkProvider> = if let Some(file) = a.provider.strip_prefix("fixture:") {
        inputs.push(PathBuf::from(file));
        Box::new(FixtureProvider::load(file)?)
    } else if let Some(url) = a.provider.strip_prefix("http:") {
        let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
        Box::new(HttpProvider::new(url))
    } else {
        return Err(Error::validation(format!(
            "provider '{}' must be fixture:<file> or http:<url>",
            a.provider
        )));
    };
    let origin = a
        .origin
        .as_deref()
        .map(|s| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| Error::validation(format!("origin '{s}' is not YYYY-MM-DD: {e}")))
        })
        .transpose()?;
    let cfg = PipelineConfig {
        eps_meters: a.eps,
        min_pts: a.min_pts,
        width: IntervalWidth::new(a.width)?,
        origin,
    };
    let registry = load_sensor_ids(&a.registry)?;
    let trips = load_trips(&a.trips)?;
    let out = run_pipeline(&trips, &registry, provider.as_ref(), &cfg)?;
    let coverage = locality_coverage(&out.matrix, &out.locality_of);
    let bundle = DatasetBundle::new(a.name.clone(), registry, out.distances.clone(), DEFAULT_KAPPA, out.matrix.clone(), None)?;
    let mut outputs = save_bundle(&a.out, &bundle, None)?;
    let summary = serde_json::json!({
        "trips": out.trips.len(),
        "clusters": out.clusters,
        "locality_coverage": coverage,
        "completeness": out.matrix.completeness(),
    });
    let path = a.out.join("pipeline_summary.json");
    write_json(&path, &summary)?;
    outputs.push(path);
    eprintln!(
        "{} trips, {} clusters, completeness {:.4}",
        out.trips.len(),
        out.clusters.len(),
        out.matrix.completeness()
    );
    Ok(Outcome { inputs, outputs, seed: None })
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let mut bundle = load_bundle(&a.bundle)?;
    let cfg = SynthConfig {
        sample_fraction: a.fraction,
        rng_seed: a.seed,
        min_support: a.min_support,
    };
    let (filled, report) = fill_all(&bundle.matrix, &cfg)?;
    let report_json = report.to_json(&filled, &cfg);
    bundle.matrix = filled;
    let mut outputs = save_bundle(&a.out, &bundle, Some(RNG_ALGORITHM))?;
    let path = a.out.join("synth_report.json");
    write_json(&path, &report_json)?;
    outputs.push(path);
    eprintln!(
        "observed {}, day rule {}, interval rule {}, unresolved {}",
        report.observed, report.filled_by_day_rule, report.filled_by_interval_rule, report.unresolved
    );
    Ok(Outcome {
        inputs: vec![a.bundle],
        outputs,
        seed: Some(a.seed),
    })
}

fn analyze(a: AnalyzeArgs) -> Result<Outcome> {
    let bundle = load_bundle(&a.bundle)?;
    let sensor = SensorId::new(a.sensor.clone())?;
    let mut cfg = AnalysisConfig::new(parse_hhmm(&a.interval)?);
    cfg.grouping = a.anova_groups.parse::<AnovaGrouping>()?;
    cfg.horizon = a.horizon;
    let report = analyze_sensor(&bundle.matrix, &sensor, &cfg)?;
    write_json(&a.out, &report)?;
    Ok(Outcome {
        inputs: vec![a.bundle],
        outputs: vec![a.out],
        seed: None,
    })
}

fn configs(flags: &ModelFlags, num_nodes: usize) -> Result<(ModelConfig, TrainConfig)> {
    let kind: ModelKind = flags.model.parse()?;
    let mut mcfg = ModelConfig::new(kind, num_nodes);
    if let Some(h) = flags.hidden {
        mcfg.hidden_units = h;
    }
    if let Some(h) = flags.history {
        mcfg.history_steps = h;
    }
    if let Some(p) = flags.horizon {
        mcfg.horizon_steps = p;
    }
    let tcfg = TrainConfig {
        batch_size: flags.batch,
        epochs: flags.epochs,
        learning_rate: flags.lr,
        seed: seed_or_default(flags.seed),
        patience: flags.patience,
        split: parse_split(&flags.split)?,
        ..TrainConfig::default()
    };
    Ok((mcfg, tcfg))
}

fn train(a: TrainArgs) -> Result<Outcome> {
    let bundle = load_bundle(&a.bundle)?;
    let (mcfg, tcfg) = configs(&a.model, bundle.registry.len())?;
    let (model, report) = crate::models::train_model(&bundle, &mcfg, &tcfg)?;
    eprintln!(
        "{} test MAE {:.4} (baseline {:.4}), {} epochs in {:.1} s",
        mcfg.kind,
        report.test.mae,
        report.baseline_test.mae,
        report.epochs.len(),
        report.wall_clock_seconds
    );
    let mut outputs = save_model(&a.out, &model)?;
    // Timings stay out of the file so reruns compare byte for byte.
    let mut value = serde_json::to_value(&report).map_err(|e| Error::json("training report", e))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("wall_clock_seconds");
        if let Some(epochs) = obj.get_mut("epochs").and_then(|e| e.as_array_mut()) {
            for e in epochs.iter_mut().filter_map(|e| e.as_object_mut()) {
                e.remove("seconds");
            }
        }
    }
    let path = a.out.join("train_report.json");
    write_json(&path, &value)?;
    outputs.push(path);
    Ok(Outcome {
        inputs: vec![a.bundle],
        outputs,
        seed: Some(tcfg.seed),
    })
}

enum OutFormat {
    Text,
    Json,
    Csv,
}

fn out_format(path: &Path) -> Result<OutFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("txt") => Ok(OutFormat::Text),
        Some("json") => Ok(OutFormat::Json),
        Some("csv") => Ok(OutFormat::Csv),
        _ => Err(Error::validation(format!(
            "{}: output extension must be txt, json or csv",
            path.display()
        ))),
    }
}

fn eval(a: EvalArgs) -> Result<Outcome> {
    let format = out_format(&a.out)?;
    let bundle = load_bundle(&a.bundle)?;
    let split = parse_split(&a.split)?;
    let mut inputs = vec![a.bundle.clone()];
    let (row, seed, model_desc) = if a.model == "baseline:ha" {
        let ha = fit_baseline(&bundle, split, a.history, a.horizon)?;
        let seed = seed_or_default(a.seed);
        let desc = serde_json::json!({"baseline": "ha", "history": a.history, "horizon": a.horizon});
        (evaluate_model(&ha, &bundle, split)?, seed, desc)
    } else {
        let dir = PathBuf::from(&a.model);
        inputs.push(dir.clone());
        let model = load_model(&dir)?;
        if model.sensors != bundle.registry.ids() {
            return Err(Error::validation(format!(
                "model {} was trained on sensors {:?}, bundle has {:?}",
                dir.display(),
                model.sensors.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                bundle.registry.ids().iter().map(|s| s.as_str()).collect::<Vec<_>>()
            )));
        }
        let desc = serde_json::to_value(&model.config).map_err(|e| Error::json("model config", e))?;
        let row = evaluate_model(&model as &dyn Forecaster, &bundle, split)?;
        (row, a.seed.unwrap_or(model.seed), desc)
    };
    let config = serde_json::json!({
        "command": "eval",
        "dataset": bundle.name,
        "model": model_desc,
        "split": [split.0, split.1, split.2],
    });
    let report = EvalReport::new(vec![row], Some(seed), &config)?;
    let text = match format {
        OutFormat::Json => report.to_json()?,
        OutFormat::Text => compare_report(&report.rows)?.to_text(),
        OutFormat::Csv => compare_report(&report.rows)?.to_csv()?,
    };
    write_text(&a.out, &text)?;
    let r = &report.rows[0];
    eprintln!("{} on {}: MAE {:.4}, MAPE {:.2}%, RMSE {:.4}", r.model, r.dataset, r.mae, r.mape, r.rmse);
    Ok(Outcome {
        inputs,
        outputs: vec![a.out],
        seed: Some(seed),
    })
}

fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        return rows_from_csv(&text);
    }
    if let Ok(report) = EvalReport::from_json(&text) {
        return Ok(report.rows);
    }
    rows_from_json(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

fn report(a: ReportArgs) -> Result<Outcome> {
    let mut rows = Vec::new();
    for p in &a.merge {
        rows.extend(read_rows(p)?);
    }
    let table = compare_report(&rows)?;
    let mut outputs = Vec::new();
    match &a.out {
        Some(out) => {
            let text = match out_format(out)? {
                OutFormat::Text => table.to_text(),
                OutFormat::Json => table.to_json()?,
                OutFormat::Csv => table.to_csv()?,
            };
            write_text(out, &text)?;
            outputs.push(out.clone());
        }
        None => print!("{}", table.to_text()),
    }
    Ok(Outcome {
        inputs: a.merge,
        outputs,
        seed: None,
    })
}

fn toy(a: ToyArgs) -> Result<Outcome> {
    if !(0.0..1.0).contains(&a.drop) {
        return Err(Error::validation(format!("--drop {} must lie in [0, 1)", a.drop)));
    }
    let seed = seed_or_default(a.seed);
    let mut bundle = toy_dataset(seed)?;
    if a.drop > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let m = &mut bundle.matrix;
        for s in 0..m.num_sensors() {
            for d in 0..m.num_days() {
                for t in 0..m.slots_per_day() {
                    if rng.random::<f64>() < a.drop {
                        m.clear(s, d, t);
                    }
                }
            }
        }
    }
    let outputs = save_bundle(&a.out, &bundle, None)?;
    Ok(Outcome {
        inputs: Vec::new(),
        outputs,
        seed: Some(seed),
    })
}

fn incremental(a: IncrementalArgs) -> Result<Outcome> {
    let bundle = load_bundle(&a.bundle)?;
    let counts = parse_counts(&a.counts)?;
    let (mcfg, tcfg) = configs(&a.model, bundle.registry.len())?;
    let points = incremental_sensor_experiment(&bundle, &counts, &mcfg, &tcfg)?;
    for p in &points {
        eprintln!("{} sensors: MAE {:.4} (baseline {:.4})", p.sensors, p.mae, p.baseline_mae);
    }
    write_json(&a.out, &points)?;
    Ok(Outcome {
        inputs: vec![a.bundle],
        outputs: vec![a.out],
        seed: Some(tcfg.seed),
    })
}

fn replay(a: ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&a.file).map_err(|e| Error::io(&a.file, e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::json(a.file.display().to_string(), e))?;
    if manifest.command == "replay" {
        return Err(Error::validation("a replay manifest cannot be replayed"));
    }
    let argv = std::iter::once("tempograph".to_string()).chain(manifest.flags.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::validation(format!("manifest flags: {e}")))?;
    execute(Cli { manifest: None, ..cli }, &[])?;
    if a.check {
        let paths: Vec<PathBuf> = manifest.outputs.keys().map(PathBuf::from).collect();
        let now = hash_all(&paths)?;
        let differing: Vec<&String> = manifest.outputs.iter().filter(|(k, v)| now.get(*k) != Some(*v)).map(|(k, _)| k).collect();
        if !differing.is_empty() {
            return Err(Error::validation(format!("outputs differ from the manifest: {differing:?}")));
        }
        eprintln!("{} outputs reproduced", manifest.outputs.len());
    }
    Ok(())
}
