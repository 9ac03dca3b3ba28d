//! The `qng` command-line front end.
//!
//! Every command is a thin wrapper over a library operation. Results go to
//! `--out` (replaced atomically) or to standard output, progress goes to
//! standard error. JSON results are wrapped in a document carrying the
//! generator version, the full configuration and its SHA-256 hash; CSV
//! results carry the same information in leading `#` lines.
//!
//! Exit codes: 0 on success, 2 on usage or input errors, 3 on numerical
//! failures. `QNG_THREADS` caps the number of worker threads.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{QngError, Result};
use crate::io::{
    config_hash, count_records_to_csv, curve_to_csv, curve_to_json, parse_count_records,
    parse_model_spec, read_curve, verdicts_to_csv, write_atomic, CurveMetadata, Format, GridSpec,
    ModelSpec, VERSION,
};
use crate::montecarlo::verify_with_curve;
use crate::source::{merged_state, simulate_counts};
use crate::threshold::{threshold_exact_with, SolverConfig, ThresholdCurve};
use crate::witness::{attenuation_path, classify_with, qng_depth, Depth, RateEstimator, Verdict};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "qng",
    version,
    about = "Quantum non-Gaussianity witnesses for click detectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Compute the threshold curve of order n.
    Threshold(ThresholdArgs),
    /// Classify count records against a threshold curve.
    Witness(WitnessArgs),
    /// Loss in dB a model state or a measured record withstands.
    Depth(DepthArgs),
    /// Simulate detection events of a model.
    Simulate(SimulateArgs),
    /// Search random Gaussian states for points above the threshold.
    Verify(VerifyArgs),
    /// Click probabilities of a model along an attenuation path.
    Path(PathArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; guessed from the --out extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Json,
}

impl Output {
    fn format(&self, fallback: Format) -> Format {
        match (self.format, &self.out) {
            (Some(FormatArg::Csv), _) => Format::Csv,
            (Some(FormatArg::Json), _) => Format::Json,
            (None, Some(p)) if p.extension().is_some() => Format::from_path(p),
            (None, _) => fallback,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    /// Criterion order.
    #[arg(short = 'n', long = "order", value_parser = parse_order)]
    pub order: usize,
    /// `default`, `verification`, `lo:hi:points` or a comma-separated list.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct CurveSource {
    /// Threshold table to compare with; computed on --grid when absent.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    pub grid: String,
}

#[derive(Debug, Args, Serialize)]
pub struct WitnessArgs {
    /// Count records (JSON object, JSON array or CSV).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub curve: CurveSource,
    /// Estimator for the n-fold rate.
    #[arg(long, value_enum, default_value = "designated")]
    pub estimator: EstimatorArg,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Designated,
    SubsetAverage,
}

impl From<EstimatorArg> for RateEstimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Designated => RateEstimator::Designated,
            EstimatorArg::SubsetAverage => RateEstimator::SubsetAverage,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DepthArgs {
    /// A model spec (JSON) or count records.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Criterion order for a model; defaults to the detector's channels - 1.
    #[arg(short = 'n', long = "order", value_parser = parse_order)]
    pub order: Option<usize>,
    /// Detector channels for a model; overrides the spec.
    #[arg(short = 'N', long = "channels")]
    pub channels: Option<usize>,
    #[command(flatten)]
    pub curve: CurveSource,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Model spec (JSON).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Overrides the seed of the spec.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the channel count of the spec.
    #[arg(short = 'N', long = "channels")]
    pub channels: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(short = 'n', long = "order", value_parser = parse_order)]
    pub order: usize,
    /// Modes per sampled state.
    #[arg(long, default_value_t = 1)]
    pub modes: usize,
    #[arg(long, default_value_t = 100_000)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "verification")]
    pub grid: String,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct PathArgs {
    /// Model spec (JSON).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(short = 'n', long = "order", value_parser = parse_order)]
    pub order: Option<usize>,
    #[arg(short = 'N', long = "channels")]
    pub channels: Option<usize>,
    /// Attenuation step.
    #[arg(long, default_value_t = 0.5)]
    pub step_db: f64,
    /// Last attenuation on the path.
    #[arg(long, default_value_t = 30.0)]
    pub max_db: f64,
    #[command(flatten)]
    pub output: Output,
}

fn parse_order(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n == 0 {
        return Err("the criterion order must be at least 1".into());
    }
    Ok(n)
}

/// Exit status for a library error.
pub fn exit_code(e: &QngError) -> u8 {
    match e {
        QngError::Domain(_)
        | QngError::Unsupported(_)
        | QngError::Inconsistent(_)
        | QngError::Io(_)
        | QngError::Parse(_) => EXIT_USAGE,
        QngError::Precision(_)
        | QngError::RootFinding(_)
        | QngError::NonMonotone(_)
        | QngError::OutOfRange { .. } => EXIT_NUMERICAL,
    }
}

/// Parses `args` (program name first), runs the command and reports errors
/// on standard error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code() as u8;
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("qng: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qng: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("QNG_THREADS") else {
        return Ok(());
    };
    let k: usize = v.trim().parse().ok().filter(|&k| k > 0).ok_or_else(|| {
        QngError::domain(format!("QNG_THREADS must be a positive integer, got {v:?}"))
    })?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global();
    Ok(())
}

/// Runs a parsed command; results without `--out` go to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let (bytes, output) = match &cli.command {
        Command::Threshold(a) => (cmd_threshold(a)?, &a.output),
        Command::Witness(a) => (cmd_witness(cli, a)?, &a.output),
        Command::Depth(a) => (cmd_depth(cli, a)?, &a.output),
        Command::Simulate(a) => (cmd_simulate(cli, a)?, &a.output),
        Command::Verify(a) => (cmd_verify(cli, a)?, &a.output),
        Command::Path(a) => (cmd_path(cli, a)?, &a.output),
    };
    match &output.out {
        Some(p) => {
            write_atomic(p, &bytes)?;
            eprintln!("qng: wrote {}", p.display());
        }
        None => stdout.write_all(&bytes)?,
    }
    Ok(())
}

fn cmd_threshold(a: &ThresholdArgs) -> Result<Vec<u8>> {
    let grid = GridSpec::parse(&a.grid)?;
    let (curve, meta) = compute_curve(a.order, grid)?;
    match a.output.format(Format::Csv) {
        Format::Csv => curve_to_csv(&curve, Some(&meta)),
        Format::Json => curve_to_json(&curve, Some(&meta)),
    }
}

fn cmd_witness(cli: &Cli, a: &WitnessArgs) -> Result<Vec<u8>> {
    let text = fs::read_to_string(&a.input)?;
    let records = parse_count_records(&text)?;
    let mut curves = CurveCache::new(&a.curve)?;
    let verdicts = records
        .iter()
        .map(|r| classify_with(r, curves.get(r.order)?, a.estimator.into()))
        .collect::<Result<Vec<Verdict>>>()?;
    let doc = Document::new(cli, &[&a.input], curves.provenance());
    match a.output.format(Format::Json) {
        Format::Json => doc.json(&verdicts),
        Format::Csv => doc.csv(verdicts_to_csv(&verdicts)?),
    }
}

/// Depth of a model state or of a measured record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthReport {
    pub order: usize,
    pub channels: usize,
    /// `model` or `counts`.
    pub source: String,
    pub depth: Option<Depth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_bracket: Option<(Depth, Depth)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

#[derive(Serialize)]
struct DepthRow {
    order: usize,
    channels: usize,
    source: String,
    state: String,
    depth_db: String,
    depth_lo: String,
    depth_hi: String,
}

fn cmd_depth(cli: &Cli, a: &DepthArgs) -> Result<Vec<u8>> {
    let text = fs::read_to_string(&a.input)?;
    let mut curves = CurveCache::new(&a.curve)?;
    let reports = match parse_model_spec(&text) {
        Ok(spec) => {
            let (model, n, channels) = model_setup(&spec, a.order, a.channels)?;
            let dist = merged_state(&model)?;
            let depth = qng_depth(&dist, n, channels, curves.get(n)?)?;
            vec![DepthReport {
                order: n,
                channels,
                source: "model".into(),
                depth: Some(depth),
                depth_bracket: None,
                state: None,
            }]
        }
        Err(_) => {
            let records = parse_count_records(&text)?;
            records
                .iter()
                .map(|r| {
                    let v = classify_with(r, curves.get(r.order)?, RateEstimator::Designated)?;
                    Ok(DepthReport {
                        order: r.order,
                        channels: r.order + 1,
                        source: "counts".into(),
                        depth: v.depth,
                        depth_bracket: v.depth_bracket,
                        state: Some(v.state.to_string()),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let doc = Document::new(cli, &[&a.input], curves.provenance());
    match a.output.format(Format::Json) {
        Format::Json => doc.json(&reports),
        Format::Csv => {
            let show = |d: Option<Depth>| d.map(|d| d.to_string()).unwrap_or_default();
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &reports {
                w.serialize(DepthRow {
                    order: r.order,
                    channels: r.channels,
                    source: r.source.clone(),
                    state: r.state.clone().unwrap_or_default(),
                    depth_db: show(r.depth),
                    depth_lo: show(r.depth_bracket.map(|b| b.0)),
                    depth_hi: show(r.depth_bracket.map(|b| b.1)),
                })?;
            }
            doc.csv(w.into_inner().map_err(|e| QngError::Io(e.to_string()))?)
        }
    }
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<Vec<u8>> {
    let spec = parse_model_spec(&fs::read_to_string(&a.input)?)?;
    let (model, _, _) = model_setup(&spec, None, a.channels)?;
    let seed = a.seed.unwrap_or(spec.seed);
    eprintln!(
        "qng: simulating {} trials of {} merged windows on {} channels",
        model.trials, model.merge_count, model.detector.channels
    );
    let record = simulate_counts(&model, seed)?;
    let doc = Document::new(cli, &[&a.input], BTreeMap::new());
    match a.output.format(Format::Json) {
        Format::Json => doc.json(&record),
        Format::Csv => doc.csv(count_records_to_csv(std::slice::from_ref(&record))?),
    }
}

#[derive(Serialize)]
struct ClosestRow {
    index: u64,
    gap: f64,
    r_n: f64,
    r_n1: f64,
    /// `beta/V/phi` of each mode, separated by `;`.
    modes: String,
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<Vec<u8>> {
    let grid = GridSpec::parse(&a.grid)?;
    let (curve, meta) = compute_curve(a.order, grid)?;
    eprintln!(
        "qng: checking {} samples of {} mode(s) against order {}",
        a.runs, a.modes, a.order
    );
    let report = verify_with_curve(&curve, a.modes, a.runs, a.seed)?;
    eprintln!(
        "qng: {} violation(s), {} undecided",
        report.violations, report.undecided
    );
    let curves = BTreeMap::from([(a.order, meta.config_hash)]);
    let doc = Document::new(cli, &[], curves);
    match a.output.format(Format::Json) {
        Format::Json => doc.json(&report),
        Format::Csv => {
            let mut head = Vec::new();
            writeln!(
                head,
                "# summary: {}",
                serde_json::to_string(&serde_json::json!({
                    "violations": report.violations,
                    "min_signed_log_distance": report.min_signed_log_distance,
                    "asymptotic": report.asymptotic,
                    "out_of_range": report.out_of_range,
                    "undecided": report.undecided,
                    "beyond_tested": report.beyond_tested,
                }))?
            )?;
            let mut w = csv::Writer::from_writer(head);
            for s in &report.closest_points {
                w.serialize(ClosestRow {
                    index: s.index,
                    gap: s.gap,
                    r_n: s.r_n,
                    r_n1: s.r_n1,
                    modes: s
                        .modes
                        .iter()
                        .map(|m| format!("{}/{}/{}", m.beta, m.v, m.phi))
                        .collect::<Vec<_>>()
                        .join(";"),
                })?;
            }
            doc.csv(w.into_inner().map_err(|e| QngError::Io(e.to_string()))?)
        }
    }
}

fn cmd_path(cli: &Cli, a: &PathArgs) -> Result<Vec<u8>> {
    let spec = parse_model_spec(&fs::read_to_string(&a.input)?)?;
    let (model, n, channels) = model_setup(&spec, a.order, a.channels)?;
    let dist = merged_state(&model)?;
    let path = attenuation_path(&dist, n, channels, a.step_db, a.max_db)?;
    let doc = Document::new(cli, &[&a.input], BTreeMap::new());
    match a.output.format(Format::Csv) {
        Format::Json => doc.json(&path),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in &path {
                w.serialize(p)?;
            }
            doc.csv(w.into_inner().map_err(|e| QngError::Io(e.to_string()))?)
        }
    }
}

/// The experiment model of a spec with optional order and channel
/// overrides. Returns the model with its criterion order and channel count.
fn model_setup(
    spec: &ModelSpec,
    order: Option<usize>,
    channels: Option<usize>,
) -> Result<(crate::source::ExperimentModel, usize, usize)> {
    let mut spec = *spec;
    if let Some(c) = channels {
        spec.channels = Some(c);
    } else if let Some(n) = order {
        spec.channels.get_or_insert(n + 1);
    }
    let model = spec.model()?;
    let channels = model.detector.channels;
    let n = order.unwrap_or(channels - 1);
    if n + 1 > channels {
        return Err(QngError::domain(format!(
            "order {n} needs at least {} channels, got {channels}",
            n + 1
        )));
    }
    Ok((model, n, channels))
}

fn compute_curve(order: usize, grid: GridSpec) -> Result<(ThresholdCurve, CurveMetadata)> {
    let solver = SolverConfig::default();
    let values = grid.values();
    eprintln!(
        "qng: solving the order-{order} threshold on {} points",
        values.len()
    );
    let curve = threshold_exact_with(order, &values, &solver)?;
    Ok((curve, CurveMetadata::new(order, grid, solver)))
}

/// Curves per order, read from a file or computed on demand.
struct CurveCache<'a> {
    source: &'a CurveSource,
    grid: GridSpec,
    curves: BTreeMap<usize, (ThresholdCurve, String)>,
}

impl<'a> CurveCache<'a> {
    fn new(source: &'a CurveSource) -> Result<Self> {
        let mut curves = BTreeMap::new();
        if let Some(p) = &source.curve {
            let (curve, meta) = read_curve(p)?;
            let hash = meta.map_or_else(|| file_digest(p), |m| Ok(m.config_hash))?;
            curves.insert(curve.order(), (curve, hash));
        }
        Ok(CurveCache {
            source,
            grid: GridSpec::parse(&source.grid)?,
            curves,
        })
    }

    fn get(&mut self, order: usize) -> Result<&ThresholdCurve> {
        if !self.curves.contains_key(&order) {
            if let Some(p) = &self.source.curve {
                return Err(QngError::Inconsistent(format!(
                    "{} holds a curve of another order than {order}",
                    p.display()
                )));
            }
            let (curve, meta) = compute_curve(order, self.grid.clone())?;
            self.curves.insert(order, (curve, meta.config_hash));
        }
        Ok(&self.curves[&order].0)
    }

    fn provenance(&self) -> BTreeMap<usize, String> {
        self.curves
            .iter()
            .map(|(k, (_, h))| (*k, h.clone()))
            .collect()
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Provenance of a command result.
#[derive(Debug, Serialize)]
struct Document<'a> {
    generator: &'static str,
    version: &'static str,
    config: &'a Command,
    /// SHA-256 of each input file.
    inputs: BTreeMap<String, String>,
    /// Configuration hash of each threshold curve used, by order.
    curves: BTreeMap<usize, String>,
    config_hash: String,
}

#[derive(Serialize)]
struct WithResult<'a, T: Serialize> {
    #[serde(flatten)]
    doc: &'a Document<'a>,
    result: &'a T,
}

impl<'a> Document<'a> {
    fn new(cli: &'a Cli, inputs: &[&PathBuf], curves: BTreeMap<usize, String>) -> Self {
        let inputs: BTreeMap<String, String> = inputs
            .iter()
            .map(|p| (p.display().to_string(), file_digest(p).unwrap_or_default()))
            .collect();
        let config_hash = config_hash(&(&cli.command, &inputs, &curves));
        Document {
            generator: "qng",
            version: VERSION,
            config: &cli.command,
            inputs,
            curves,
            config_hash,
        }
    }

    fn json<T: Serialize>(&self, result: &T) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(&WithResult { doc: self, result })?;
        v.push(b'\n');
        Ok(v)
    }

    fn csv(&self, body: Vec<u8>) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "# generator: {} {}", self.generator, self.version)?;
        writeln!(out, "# config_hash: {}", self.config_hash)?;
        writeln!(
            out,
            "# config: {}",
            serde_json::to_string(&serde_json::json!({
                "config": self.config,
                "inputs": self.inputs,
                "curves": self.curves,
            }))?
        )?;
        out.extend(body);
        Ok(out)
    }
}
