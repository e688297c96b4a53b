//! Command-line entry point: streaming ingestion, interval/band
//! construction, theory reports, experiments, and the cost bench.
//!
//! Every artifact embeds the fully resolved configuration and master seed,
//! so any output can be reproduced from its own header. Schemas carry a
//! `schema_version` field; CSV column sets are pinned by golden tests.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bootstrap::{BootstrapEnsemble, MultiplierLaw};
use crate::error::{Error, Result};
use crate::inference::{
    normal_interval, percentile_interval, simultaneous_band, BandMode, ConfidenceInterval,
};
use crate::kernel::MercerBasisSpec;
use crate::offline::{timing_bench, BenchConfig};
use crate::oracle::TheoryContext;
use crate::rng::CounterRng;
use crate::sgd::{SgdTrajectory, StepSchedule};
use crate::sim::{
    experiment_with_progress, truth_eval, ExperimentConfig, ExperimentKind, RunRecord,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Streaming regression with online bootstrap uncertainty quantification.
#[derive(Debug, Parser)]
#[command(name = "rkhs-streamci", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Consume a stream and emit averaged-estimator grid evaluations.
    Fit(FitArgs),
    /// Fit plus bootstrap ensemble; pointwise confidence intervals.
    Infer(InferArgs),
    /// Fit plus bootstrap ensemble; simultaneous confidence band.
    Band(BandArgs),
    /// Closed-form theory report (leading bias, limiting variance).
    Oracle(OracleArgs),
    /// Replicated coverage or band experiments on synthetic streams.
    Simulate(SimulateArgs),
    /// Online-vs-offline cumulative cost growth comparison.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SharedArgs {
    /// Eigenvalue decay exponent of the kernel.
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Number of retained eigenpairs.
    #[arg(long, default_value_t = 1000)]
    pub truncation: usize,
    /// Step-size schedule: constant | constant:<gamma> | poly:<xi>[:<scale>]
    /// | undersmoothed:<eps>.
    #[arg(long, default_value = "undersmoothed:0.02")]
    pub schedule: String,
    /// Master seed for all random substreams.
    #[arg(long, default_value_t = 17492)]
    pub seed: u64,
    /// Output path (stdout when omitted; `simulate` treats this as a
    /// prefix and writes <out>.csv and <out>.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StreamInputArgs {
    /// Input stream: CSV lines `x,y` or JSON lines `{"x":..,"y":..}`;
    /// `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub stream: StreamInputArgs,
    /// Evaluation grid size.
    #[arg(long = "grid-size", default_value_t = 101)]
    pub grid_size: usize,
    /// Checkpoints at which grid evaluations are emitted, e.g. "500,1000";
    /// defaults to the end of the stream.
    #[arg(long)]
    pub checkpoints: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub stream: StreamInputArgs,
    /// Bootstrap ensemble size.
    #[arg(long = "J", default_value_t = 300)]
    pub ensemble_size: usize,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Multiplier law: gaussian | twopoint | uniform | degenerate.
    #[arg(long, default_value = "gaussian")]
    pub law: String,
    /// Evaluation points, e.g. "0.25,0.5,0.75"; defaults to nine deciles.
    #[arg(long)]
    pub points: Option<String>,
    /// Output format: json | csv.
    #[arg(long, default_value = "json")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct BandArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(flatten)]
    pub stream: StreamInputArgs,
    #[arg(long = "J", default_value_t = 300)]
    pub ensemble_size: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value = "gaussian")]
    pub law: String,
    /// Band grid size.
    #[arg(long = "grid-size", default_value_t = 100)]
    pub grid_size: usize,
    /// Band mode: symmetric | paper.
    #[arg(long = "band-mode", default_value = "symmetric")]
    pub band_mode: String,
    #[arg(long, default_value = "json")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Horizon n.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Noise variance.
    #[arg(long, default_value_t = 0.2)]
    pub sigma2: f64,
    /// Query point.
    #[arg(long, default_value_t = 0.5)]
    pub z0: f64,
    /// Synthetic case (1..=3) whose truth supplies the bias target;
    /// omit for a variance-only report.
    #[arg(long)]
    pub case: Option<u8>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// JSON experiment config file; flag overrides are applied on top.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Experiment kind: coverage | band.
    #[arg(long, default_value = "coverage")]
    pub kind: String,
    #[arg(long)]
    pub case: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "J")]
    pub ensemble_size: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long = "band-mode")]
    pub band_mode: Option<String>,
    #[arg(long = "grid-size")]
    pub grid_size: Option<usize>,
    /// Comma-separated checkpoints, e.g. "501,1000,1500".
    #[arg(long)]
    pub checkpoints: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Comma-separated checkpoints.
    #[arg(long, default_value = "250,500,1000,2000")]
    pub checkpoints: String,
    #[arg(long = "J", default_value_t = 50)]
    pub ensemble_size: usize,
    #[arg(long, default_value_t = 1)]
    pub case: u8,
    #[arg(long, default_value_t = 0.2)]
    pub sigma2: f64,
    #[arg(long, default_value = "json")]
    pub format: String,
}

/// Stream ingestion summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StreamSummary {
    pub accepted: usize,
    /// Arrivals rejected for an out-of-domain or non-finite value.
    pub rejected: usize,
    pub header_skipped: bool,
}

/// Parse a data stream: CSV lines `x,y` or JSON lines, one record per line.
/// A leading non-numeric header line is skipped. Malformed lines are errors
/// naming the line number; out-of-domain or non-finite records are counted
/// and skipped.
pub fn parse_stream<R: BufRead>(reader: R) -> Result<(Vec<(f64, f64)>, StreamSummary)> {
    let mut pairs = Vec::new();
    let mut summary = StreamSummary { accepted: 0, rejected: 0, header_skipped: false };
    let mut saw_content = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let parsed = parse_record(text);
        let (x, y) = match parsed {
            Ok(p) => p,
            Err(message) => {
                if !saw_content && looks_like_header(text) {
                    summary.header_skipped = true;
                    saw_content = true;
                    continue;
                }
                return Err(Error::Parse { line: line_no, message });
            }
        };
        saw_content = true;
        if !x.is_finite() || !y.is_finite() || !(0.0..=1.0).contains(&x) {
            summary.rejected += 1;
            continue;
        }
        pairs.push((x, y));
        summary.accepted += 1;
    }
    Ok((pairs, summary))
}

fn looks_like_header(text: &str) -> bool {
    !text.starts_with('{') && text.chars().any(|c| c.is_ascii_alphabetic())
}

fn parse_record(text: &str) -> std::result::Result<(f64, f64), String> {
    if text.starts_with('{') {
        #[derive(serde::Deserialize)]
        struct Record {
            x: f64,
            y: f64,
        }
        let rec: Record =
            serde_json::from_str(text).map_err(|e| format!("bad JSON record: {e}"))?;
        return Ok((rec.x, rec.y));
    }
    let mut fields = text.split(',');
    let x = fields.next().ok_or("missing x field")?.trim();
    let y = fields.next().ok_or_else(|| "missing y field".to_string())?.trim();
    if fields.next().is_some() {
        return Err("expected exactly two fields".into());
    }
    let x: f64 = x.parse().map_err(|_| format!("bad x value {x:?}"))?;
    let y: f64 = y.parse().map_err(|_| format!("bad y value {y:?}"))?;
    Ok((x, y))
}

/// Write a stream as CSV `x,y` lines (round-trips bit-exactly through
/// [`parse_stream`]).
pub fn emit_stream<W: Write>(mut w: W, pairs: &[(f64, f64)]) -> Result<()> {
    for &(x, y) in pairs {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

fn parse_schedule(text: &str, alpha: f64) -> Result<StepSchedule> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["constant"] => StepSchedule::constant_for_horizon(alpha),
        ["constant", g] => {
            let gamma: f64 =
                g.parse().map_err(|_| Error::Config(format!("bad constant step {g:?}")))?;
            StepSchedule::constant(gamma)
        }
        ["poly", xi] => {
            let xi: f64 =
                xi.parse().map_err(|_| Error::Config(format!("bad polynomial exponent {xi:?}")))?;
            StepSchedule::polynomial(xi, 1.0)
        }
        ["poly", xi, scale] => {
            let xi: f64 =
                xi.parse().map_err(|_| Error::Config(format!("bad polynomial exponent {xi:?}")))?;
            let scale: f64 = scale
                .parse()
                .map_err(|_| Error::Config(format!("bad polynomial scale {scale:?}")))?;
            StepSchedule::polynomial(xi, scale)
        }
        ["undersmoothed", eps] => {
            let eps: f64 = eps
                .parse()
                .map_err(|_| Error::Config(format!("bad undersmoothing epsilon {eps:?}")))?;
            StepSchedule::undersmoothed(eps, alpha)
        }
        _ => Err(Error::Config(format!(
            "unknown schedule {text:?}; expected constant | constant:<gamma> | poly:<xi>[:<scale>] \
             | undersmoothed:<eps>"
        ))),
    }
}

fn parse_law(text: &str) -> Result<MultiplierLaw> {
    match text {
        "gaussian" => Ok(MultiplierLaw::GaussianUnit),
        "twopoint" => Ok(MultiplierLaw::TwoPoint),
        "uniform" => Ok(MultiplierLaw::ShiftedUniform),
        "degenerate" => Ok(MultiplierLaw::DegenerateOne),
        _ => Err(Error::Config(format!(
            "unknown multiplier law {text:?}; expected gaussian | twopoint | uniform | degenerate"
        ))),
    }
}

fn parse_band_mode(text: &str) -> Result<BandMode> {
    match text {
        "symmetric" => Ok(BandMode::Symmetric),
        "paper" => Ok(BandMode::PaperLiteral),
        _ => Err(Error::Config(format!(
            "unknown band mode {text:?}; expected symmetric | paper"
        ))),
    }
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad integer {s:?} in list")))
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {s:?} in list")))
        })
        .collect()
}

fn read_stream(input: &str) -> Result<(Vec<(f64, f64)>, StreamSummary)> {
    if input == "-" {
        let stdin = std::io::stdin();
        parse_stream(stdin.lock())
    } else {
        let file = File::open(input)?;
        parse_stream(BufReader::new(file))
    }
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = File::create(path)?;
            f.write_all(content.as_bytes())?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

fn interval_csv(intervals: &[(f64, ConfidenceInterval)]) -> String {
    let mut out = String::from("point,center,lower,upper,level,method\n");
    for (p, ci) in intervals {
        let method = match ci.method {
            crate::inference::CiMethod::Normal => "normal",
            crate::inference::CiMethod::Percentile => "percentile",
        };
        out.push_str(&format!(
            "{p},{},{},{},{},{method}\n",
            ci.center, ci.lower, ci.upper, ci.level
        ));
    }
    out
}

struct FittedStream {
    reference: SgdTrajectory,
    ensemble: Option<BootstrapEnsemble>,
    summary: StreamSummary,
    n: usize,
}

fn run_stream_fit(
    shared: &SharedArgs,
    input: &str,
    ensemble: Option<(usize, MultiplierLaw)>,
) -> Result<FittedStream> {
    let (pairs, summary) = read_stream(input)?;
    if pairs.is_empty() {
        return Err(Error::Data("no data: the input stream is empty".into()));
    }
    let n = pairs.len();
    let basis = Arc::new(MercerBasisSpec::new(shared.alpha, shared.truncation, true)?);
    let schedule = parse_schedule(&shared.schedule, shared.alpha)?;
    let mut reference = SgdTrajectory::new(Arc::clone(&basis));
    let mut ens = match ensemble {
        Some((j, law)) => {
            let seed = CounterRng::substream(shared.seed, "ensemble", 0).next_u64();
            Some(BootstrapEnsemble::new(Arc::clone(&basis), j, law, seed)?)
        }
        None => None,
    };
    for (i, &(x, y)) in pairs.iter().enumerate() {
        let gamma = schedule.step_size(i + 1, Some(n))?;
        match ens.as_mut() {
            Some(e) => e.ingest_with_reference(&mut reference, x, y, gamma)?,
            None => reference.update(x, y, gamma)?,
        }
    }
    Ok(FittedStream { reference, ensemble: ens, summary, n })
}

fn config_echo(shared: &SharedArgs, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "alpha": shared.alpha,
        "truncation": shared.truncation,
        "schedule": shared.schedule,
        "master_seed": shared.seed,
        "extra": extra,
    })
}

fn cmd_fit(args: &FitArgs) -> Result<String> {
    let (pairs, summary) = read_stream(&args.stream.input)?;
    if pairs.is_empty() {
        return Err(Error::Data("no data: the input stream is empty".into()));
    }
    let n = pairs.len();
    let mut checkpoints = match &args.checkpoints {
        Some(text) => parse_usize_list(text)?,
        None => vec![n],
    };
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if checkpoints.iter().any(|&t| t == 0 || t > n) {
        return Err(Error::Config(format!("checkpoints must lie in 1..={n} (stream length)")));
    }
    if args.grid_size < 2 {
        return Err(Error::Config("grid size must be at least 2".into()));
    }
    let grid: Vec<f64> =
        (0..args.grid_size).map(|i| i as f64 / (args.grid_size - 1) as f64).collect();

    let basis = Arc::new(MercerBasisSpec::new(args.shared.alpha, args.shared.truncation, true)?);
    let schedule = parse_schedule(&args.shared.schedule, args.shared.alpha)?;
    let mut traj = SgdTrajectory::new(basis);
    let mut blocks = Vec::new();
    let mut next = 0usize;
    for (i, &(x, y)) in pairs.iter().enumerate() {
        traj.update(x, y, schedule.step_size(i + 1, Some(n))?)?;
        while next < checkpoints.len() && checkpoints[next] == i + 1 {
            let values: Vec<f64> = grid.iter().map(|&g| traj.eval_averaged(g)).collect();
            blocks.push(serde_json::json!({ "t": i + 1, "grid": grid, "f_bar": values }));
            next += 1;
        }
    }
    let doc = serde_json::json!({
        "config": config_echo(&args.shared, serde_json::json!({
            "grid_size": args.grid_size,
            "stream": args.stream.input,
            "stream_summary": summary,
        })),
        "checkpoints": blocks,
    });
    Ok(format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

fn cmd_infer(args: &InferArgs) -> Result<String> {
    let law = parse_law(&args.law)?;
    let fitted =
        run_stream_fit(&args.shared, &args.stream.input, Some((args.ensemble_size, law)))?;
    let points = match &args.points {
        Some(text) => parse_f64_list(text)?,
        None => (1..=9).map(|i| i as f64 / 10.0).collect(),
    };
    if points.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("evaluation points must lie in [0,1]".into()));
    }
    let ensemble = fitted.ensemble.as_ref().expect("ensemble requested");
    let values = ensemble.averaged_values(&points);
    let mut intervals = Vec::new();
    for (m, &p) in points.iter().enumerate() {
        let center = fitted.reference.eval_averaged(p);
        let evals: Vec<f64> = values.iter().map(|row| row[m]).collect();
        intervals.push((p, normal_interval(center, &evals, args.level)?));
        intervals.push((p, percentile_interval(center, &evals, args.level)?));
    }
    match args.format.as_str() {
        "csv" => Ok(interval_csv(&intervals)),
        "json" => {
            let doc = serde_json::json!({
                "config": config_echo(&args.shared, serde_json::json!({
                    "J": args.ensemble_size,
                    "level": args.level,
                    "law": law,
                    "stream": args.stream.input,
                    "stream_summary": fitted.summary,
                })),
                "intervals": intervals
                    .iter()
                    .map(|(p, ci)| serde_json::json!({ "point": p, "interval": ci }))
                    .collect::<Vec<_>>(),
            });
            Ok(format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        other => Err(Error::Config(format!("unknown format {other:?}; expected json | csv"))),
    }
}

fn cmd_band(args: &BandArgs) -> Result<String> {
    let law = parse_law(&args.law)?;
    let mode = parse_band_mode(&args.band_mode)?;
    let fitted =
        run_stream_fit(&args.shared, &args.stream.input, Some((args.ensemble_size, law)))?;
    let grid: Vec<f64> = (0..args.grid_size)
        .map(|i| i as f64 / (args.grid_size - 1) as f64)
        .collect();
    let ensemble = fitted.ensemble.as_ref().expect("ensemble requested");
    let deviations = ensemble.centered_deviations(&fitted.reference, &grid)?;
    let centers: Vec<f64> = grid.iter().map(|&t| fitted.reference.eval_averaged(t)).collect();
    let band = simultaneous_band(&grid, &centers, &deviations, args.level, mode)?;
    match args.format.as_str() {
        "csv" => Ok(band.to_csv()),
        "json" => {
            let doc = serde_json::json!({
                "config": config_echo(&args.shared, serde_json::json!({
                    "J": args.ensemble_size,
                    "level": args.level,
                    "law": law,
                    "grid_size": args.grid_size,
                    "stream": args.stream.input,
                    "stream_summary": fitted.summary,
                })),
                "band": band,
            });
            Ok(format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        other => Err(Error::Config(format!("unknown format {other:?}; expected json | csv"))),
    }
}

fn cmd_oracle(args: &OracleArgs) -> Result<String> {
    let basis = Arc::new(MercerBasisSpec::new(args.shared.alpha, args.shared.truncation, true)?);
    let schedule = parse_schedule(&args.shared.schedule, args.shared.alpha)?;
    let mut ctx = TheoryContext::new(basis, schedule, args.n, args.sigma2)?;
    if let Some(case) = args.case {
        ctx = ctx.with_target(move |x| truth_eval(case, x).unwrap_or(f64::NAN))?;
    }
    let report = ctx.report_json(args.z0)?;
    let doc = serde_json::json!({
        "config": config_echo(&args.shared, serde_json::json!({
            "n": args.n, "sigma2": args.sigma2, "z0": args.z0, "case": args.case,
        })),
        "report": report,
    });
    Ok(format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

fn apply_simulate_overrides(cfg: &mut ExperimentConfig, args: &SimulateArgs) -> Result<()> {
    let shared = &args.shared;
    cfg.alpha = shared.alpha;
    cfg.truncation = shared.truncation;
    cfg.master_seed = shared.seed;
    cfg.schedule = parse_schedule(&shared.schedule, shared.alpha)?;
    if let Some(case) = args.case {
        cfg.case_id = case;
    }
    if let Some(n) = args.n {
        cfg.n = n;
        cfg.checkpoints = crate::sim::default_checkpoints(n);
    }
    if let Some(j) = args.ensemble_size {
        cfg.ensemble_size = j;
    }
    if let Some(level) = args.level {
        cfg.level = level;
    }
    if let Some(reps) = args.replicates {
        cfg.replicates = reps;
    }
    if let Some(s2) = args.sigma2 {
        cfg.sigma2 = s2;
    }
    if let Some(law) = &args.law {
        cfg.law = parse_law(law)?;
    }
    if let Some(mode) = &args.band_mode {
        cfg.band_mode = parse_band_mode(mode)?;
    }
    if let Some(g) = args.grid_size {
        cfg.grid_size = g;
    }
    if let Some(text) = &args.checkpoints {
        cfg.checkpoints = parse_usize_list(text)?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(String, bool)> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut text = String::new();
            File::open(path)?.read_to_string(&mut text)?;
            serde_json::from_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    apply_simulate_overrides(&mut cfg, args)?;
    let kind = match args.kind.as_str() {
        "coverage" => ExperimentKind::Coverage,
        "band" => ExperimentKind::Band,
        other => {
            return Err(Error::Config(format!(
                "unknown experiment kind {other:?}; expected coverage | band"
            )))
        }
    };

    // Incremental CSV emission: append records as replicate chunks finish.
    let csv_path = args.shared.out.as_ref().map(|p| with_extension(p, "csv"));
    let mut csv_file = match &csv_path {
        Some(path) => {
            let mut f = File::create(path)?;
            f.write_all(b"replicate,checkpoint,method,covered,length,seconds\n")?;
            Some(f)
        }
        None => None,
    };
    let report = experiment_with_progress(&cfg, kind, |records: &[RunRecord]| {
        if let Some(f) = csv_file.as_mut() {
            for r in records {
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    r.replicate, r.checkpoint, r.method, r.covered, r.length, r.seconds
                )?;
            }
            f.flush()?;
        }
        Ok(())
    })?;

    let summary = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": report.experiment,
        "config": report.config,
        "summaries": report.summaries,
        "aborted": report.aborted,
    });
    let json_text = format!("{}\n", serde_json::to_string_pretty(&summary)?);
    if let Some(prefix) = &args.shared.out {
        let mut f = File::create(with_extension(prefix, "json"))?;
        f.write_all(json_text.as_bytes())?;
    }
    let any_aborted = !report.aborted.is_empty();
    Ok((json_text, any_aborted))
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut p = prefix.to_path_buf();
    let new_ext = match p.extension() {
        Some(existing) => format!("{}.{ext}", existing.to_string_lossy()),
        None => ext.to_string(),
    };
    p.set_extension(new_ext);
    p
}

fn cmd_bench(args: &BenchArgs) -> Result<String> {
    let cfg = BenchConfig {
        checkpoints: parse_usize_list(&args.checkpoints)?,
        ensemble_size: args.ensemble_size,
        case_id: args.case,
        sigma2: args.sigma2,
        alpha: args.shared.alpha,
        truncation: args.shared.truncation,
        master_seed: args.shared.seed,
    };
    let report = timing_bench(&cfg)?;
    match args.format.as_str() {
        "csv" => Ok(report.to_csv()),
        "json" => {
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "report": report,
            });
            Ok(format!("{}\n", serde_json::to_string_pretty(&doc)?))
        }
        other => Err(Error::Config(format!("unknown format {other:?}; expected json | csv"))),
    }
}

/// Cap the rayon worker pool from `RKHS_STREAMCI_THREADS` (ignored if the
/// global pool is already initialized).
pub fn init_thread_pool_from_env() {
    if let Ok(text) = std::env::var("RKHS_STREAMCI_THREADS") {
        if let Ok(threads) = text.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

fn error_json(err: &Error) -> String {
    let line = match err {
        Error::Parse { line, .. } => Some(*line),
        _ => None,
    };
    serde_json::json!({
        "error": err.to_string(),
        "line": line,
    })
    .to_string()
}

/// Execute a parsed command line; returns the process exit code. Artifacts
/// go to `--out` (stdout otherwise); failures print a structured JSON error
/// to stderr.
pub fn run(cli: &Cli) -> i32 {
    let outcome: Result<(String, Option<PathBuf>, bool)> = match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|s| (s, a.shared.out.clone(), false)),
        Command::Infer(a) => cmd_infer(a).map(|s| (s, a.shared.out.clone(), false)),
        Command::Band(a) => cmd_band(a).map(|s| (s, a.shared.out.clone(), false)),
        Command::Oracle(a) => cmd_oracle(a).map(|s| (s, a.shared.out.clone(), false)),
        Command::Simulate(a) => {
            // simulate writes its own files when --out is set.
            cmd_simulate(a).map(|(s, aborted)| {
                let to_stdout = a.shared.out.is_none();
                (if to_stdout { s } else { String::new() }, None, aborted)
            })
        }
        Command::Bench(a) => cmd_bench(a).map(|s| (s, a.shared.out.clone(), false)),
    };
    match outcome {
        Ok((content, out, aborted)) => {
            if !content.is_empty() {
                if let Err(e) = write_output(&out, &content) {
                    eprintln!("{}", error_json(&e));
                    return 1;
                }
            }
            if aborted {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code_for(&e)
        }
    }
}
