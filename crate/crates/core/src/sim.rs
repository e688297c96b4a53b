//! Synthetic-stream generation and replicated coverage experiments.
//!
//! Streams draw designs uniformly on (0,1) and add Gaussian noise to one of
//! three reference regression functions (a low-frequency sine and two beta
//! density mixtures of growing complexity). The harness runs one plain
//! trajectory plus a bootstrap ensemble through each stream, builds
//! intervals or bands at checkpoints, and aggregates empirical coverage,
//! interval length, and wall-clock statistics across replicates. Replicates
//! are embarrassingly parallel; every random quantity comes from a named
//! substream of the master seed, so reports are bit-identical regardless of
//! worker count.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{BootstrapEnsemble, MultiplierLaw};
use crate::error::{Error, Result};
use crate::inference::{
    normal_interval, percentile_interval, simultaneous_band, BandMode, ConfidenceInterval,
};
use crate::kernel::MercerBasisSpec;
use crate::oracle::TheoryContext;
use crate::rng::CounterRng;
use crate::sgd::{SgdTrajectory, StepSchedule};
use crate::stats::{ln_gamma, mean, sample_variance};

/// Beta density `x^(p-1) (1-x)^(q-1) / B(p, q)` on [0, 1].
pub fn beta_density(p: f64, q: f64, x: f64) -> Result<f64> {
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::Config(format!("beta shape parameters must be positive, got ({p}, {q})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    let ln_b = ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q);
    // Boundary cases by limits of the power terms.
    let ln_x_term = if x == 0.0 {
        if p > 1.0 {
            return Ok(0.0);
        } else if p == 1.0 {
            0.0
        } else {
            return Ok(f64::INFINITY);
        }
    } else {
        (p - 1.0) * x.ln()
    };
    let ln_one_minus = if x == 1.0 {
        if q > 1.0 {
            return Ok(0.0);
        } else if q == 1.0 {
            0.0
        } else {
            return Ok(f64::INFINITY);
        }
    } else {
        (q - 1.0) * (-x).ln_1p()
    };
    Ok((ln_x_term + ln_one_minus - ln_b).exp())
}

/// Reference regression functions for the three synthetic cases.
pub fn truth_eval(case_id: u8, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    match case_id {
        1 => Ok((1.5 * std::f64::consts::PI * x).sin()),
        2 => Ok((beta_density(10.0, 5.0, x)?
            + beta_density(7.0, 7.0, x)?
            + beta_density(5.0, 10.0, x)?)
            / 3.0),
        3 => Ok(6.0 / 19.0 * beta_density(30.0, 17.0, x)? + 0.4 * beta_density(3.0, 11.0, x)?),
        other => Err(Error::Config(format!("unknown case id {other}; expected 1, 2, or 3"))),
    }
}

/// Where pointwise intervals are assessed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalPoints {
    /// At the replicate's own design point `X_t` for checkpoint `t`.
    CheckpointArrival,
    /// At a fixed list of points.
    Fixed { points: Vec<f64> },
}

/// Full experiment description. Serializable as the JSON config consumed by
/// the command-line `simulate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub case_id: u8,
    pub n: usize,
    pub checkpoints: Vec<usize>,
    pub replicates: usize,
    /// Bootstrap ensemble size J.
    pub ensemble_size: usize,
    pub level: f64,
    pub schedule: StepSchedule,
    pub sigma2: f64,
    pub master_seed: u64,
    /// Number of grid points for bands.
    pub grid_size: usize,
    /// Band grid endpoints (evenly spaced, inclusive).
    pub band_range: (f64, f64),
    pub band_mode: BandMode,
    pub eval_points: EvalPoints,
    pub alpha: f64,
    pub truncation: usize,
    pub include_constant: bool,
    pub law: MultiplierLaw,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: Case 1, n = 1500, J = 300, 200 replicates.
    fn default() -> Self {
        Self {
            case_id: 1,
            n: 1500,
            checkpoints: default_checkpoints(1500),
            replicates: 200,
            ensemble_size: 300,
            level: 0.95,
            schedule: StepSchedule::Undersmoothed { epsilon: 0.02, alpha: 2.0 },
            sigma2: 0.2,
            master_seed: 1_7492,
            grid_size: 100,
            band_range: (0.05, 0.95),
            band_mode: BandMode::Symmetric,
            eval_points: EvalPoints::CheckpointArrival,
            alpha: 2.0,
            truncation: 1000,
            include_constant: true,
            law: MultiplierLaw::GaussianUnit,
        }
    }
}

/// Checkpoints used in the reference experiments, filtered to the horizon.
pub fn default_checkpoints(n: usize) -> Vec<usize> {
    let standard = [501usize, 1000, 1500, 2000, 2500, 3000, 3500, 4000];
    let mut out: Vec<usize> = standard.iter().copied().filter(|&t| t <= n).collect();
    if out.last() != Some(&n) && n > 0 {
        out.push(n);
    }
    out
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.case_id) {
            return Err(Error::Config(format!("case id must be 1..=3, got {}", self.case_id)));
        }
        if self.n == 0 || self.replicates == 0 || self.ensemble_size == 0 {
            return Err(Error::Config("n, replicates and ensemble size must be positive".into()));
        }
        if self.checkpoints.is_empty()
            || !self.checkpoints.windows(2).all(|w| w[0] < w[1])
            || *self.checkpoints.last().unwrap() > self.n
        {
            return Err(Error::Config(
                "checkpoints must be nonempty, increasing, and bounded by n".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0,1), got {}", self.level)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::Config(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if self.grid_size < 2
            || !(0.0..=1.0).contains(&self.band_range.0)
            || !(0.0..=1.0).contains(&self.band_range.1)
            || self.band_range.0 >= self.band_range.1
        {
            return Err(Error::Config("band grid needs >= 2 points and an increasing range".into()));
        }
        if let EvalPoints::Fixed { points } = &self.eval_points {
            if points.is_empty() || points.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Config("fixed evaluation points must be nonempty in [0,1]".into()));
            }
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<MercerBasisSpec>> {
        Ok(Arc::new(MercerBasisSpec::new(self.alpha, self.truncation, self.include_constant)?))
    }

    /// Evenly spaced band grid over `band_range`, inclusive.
    pub fn band_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.band_range;
        let m = self.grid_size;
        (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
    }

    /// One synthetic stream, deterministic in `(master_seed, replicate)`.
    pub fn gen_stream(&self, replicate: usize) -> Result<Vec<(f64, f64)>> {
        gen_stream(self.case_id, self.n, self.sigma2, self.master_seed, replicate)
    }
}

/// `n` pairs with `x ~ Uniform(0,1)` and `y = truth(x) + Normal(0, sigma2)`,
/// deterministic given `(master_seed, replicate)`.
pub fn gen_stream(
    case_id: u8,
    n: usize,
    sigma2: f64,
    master_seed: u64,
    replicate: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut xs = CounterRng::substream(master_seed, "design", replicate as u64);
    let mut noise = CounterRng::substream(master_seed, "noise", replicate as u64);
    let sd = sigma2.sqrt();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = xs.next_f64();
        let y = truth_eval(case_id, x)? + noise.next_normal(0.0, sd);
        out.push((x, y));
    }
    Ok(out)
}

/// One CSV row of a coverage or band experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replicate: usize,
    pub checkpoint: usize,
    pub method: String,
    pub covered: bool,
    pub length: f64,
    pub seconds: f64,
}

/// Aggregate per (checkpoint, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub checkpoint: usize,
    pub method: String,
    pub records: usize,
    pub coverage: f64,
    pub mean_length: f64,
    pub var_length: f64,
    pub mean_seconds: f64,
}

/// Replicated experiment output: long-format records, per-method summaries,
/// aborted replicates, and the fully resolved configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ExperimentConfig,
    pub experiment: String,
    pub records: Vec<RunRecord>,
    pub summaries: Vec<MethodSummary>,
    pub aborted: Vec<(usize, String)>,
}

impl CoverageReport {
    /// Long-format CSV: `replicate,checkpoint,method,covered,length,seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,checkpoint,method,covered,length,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.replicate, r.checkpoint, r.method, r.covered, r.length, r.seconds
            ));
        }
        out
    }

    pub fn summary_for(&self, checkpoint: usize, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.checkpoint == checkpoint && s.method == method)
    }

    fn from_records(
        config: &ExperimentConfig,
        experiment: &str,
        records: Vec<RunRecord>,
        aborted: Vec<(usize, String)>,
    ) -> Self {
        let mut summaries = Vec::new();
        for &checkpoint in &config.checkpoints {
            let mut methods: Vec<String> = records
                .iter()
                .filter(|r| r.checkpoint == checkpoint)
                .map(|r| r.method.clone())
                .collect();
            methods.sort();
            methods.dedup();
            for method in methods {
                let rows: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.checkpoint == checkpoint && r.method == method)
                    .collect();
                let lengths: Vec<f64> = rows.iter().map(|r| r.length).collect();
                let secs: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
                let covered = rows.iter().filter(|r| r.covered).count();
                summaries.push(MethodSummary {
                    checkpoint,
                    method,
                    records: rows.len(),
                    coverage: covered as f64 / rows.len() as f64,
                    mean_length: mean(&lengths),
                    var_length: sample_variance(&lengths),
                    mean_seconds: mean(&secs),
                });
            }
        }
        Self {
            config: config.clone(),
            experiment: experiment.to_string(),
            records,
            summaries,
            aborted,
        }
    }
}

struct ReplicateOutput {
    records: Vec<RunRecord>,
}

fn run_replicate<F>(
    config: &ExperimentConfig,
    basis: &Arc<MercerBasisSpec>,
    replicate: usize,
    mut at_checkpoint: F,
) -> Result<ReplicateOutput>
where
    F: FnMut(
        usize,
        &SgdTrajectory,
        &BootstrapEnsemble,
        &[(f64, f64)],
        f64,
    ) -> Result<Vec<RunRecord>>,
{
    let stream = config.gen_stream(replicate)?;
    let ensemble_seed = CounterRng::substream(config.master_seed, "ensemble", replicate as u64)
        .next_u64();
    let mut reference = SgdTrajectory::new(Arc::clone(basis));
    let mut ensemble =
        BootstrapEnsemble::new(Arc::clone(basis), config.ensemble_size, config.law, ensemble_seed)?;
    let start = Instant::now();
    let mut records = Vec::new();
    let mut next_checkpoint = 0usize;
    for (i, &(x, y)) in stream.iter().enumerate() {
        let arrival = i + 1;
        let gamma = config.schedule.step_size(arrival, Some(config.n))?;
        ensemble.ingest_with_reference(&mut reference, x, y, gamma)?;
        while next_checkpoint < config.checkpoints.len()
            && config.checkpoints[next_checkpoint] == arrival
        {
            let elapsed = start.elapsed().as_secs_f64();
            records.extend(at_checkpoint(arrival, &reference, &ensemble, &stream, elapsed)?);
            next_checkpoint += 1;
        }
    }
    Ok(ReplicateOutput { records })
}

fn pointwise_records(
    config: &ExperimentConfig,
    replicate: usize,
    checkpoint: usize,
    reference: &SgdTrajectory,
    ensemble: &BootstrapEnsemble,
    stream: &[(f64, f64)],
    seconds: f64,
) -> Result<Vec<RunRecord>> {
    let points: Vec<f64> = match &config.eval_points {
        EvalPoints::CheckpointArrival => vec![stream[checkpoint - 1].0],
        EvalPoints::Fixed { points } => points.clone(),
    };
    let values = ensemble.averaged_values(&points);
    let mut records = Vec::new();
    for (m, &point) in points.iter().enumerate() {
        let center = reference.eval_averaged(point);
        let evals: Vec<f64> = values.iter().map(|row| row[m]).collect();
        let truth = truth_eval(config.case_id, point)?;
        let normal = normal_interval(center, &evals, config.level)?;
        let pct = percentile_interval(center, &evals, config.level)?;
        for (name, ci) in [("normal", normal), ("percentile", pct)] {
            records.push(RunRecord {
                replicate,
                checkpoint,
                method: name.to_string(),
                covered: ci.covers(truth),
                length: ci.width(),
                seconds,
            });
        }
    }
    Ok(records)
}

/// Which experiment a simulate run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Coverage,
    Band,
}

fn collect_replicates<W, F>(
    config: &ExperimentConfig,
    worker: W,
    mut on_chunk: F,
) -> Result<(Vec<RunRecord>, Vec<(usize, String)>)>
where
    W: Fn(usize) -> Result<ReplicateOutput> + Sync,
    F: FnMut(&[RunRecord]) -> Result<()>,
{
    // Replicates run in parallel within fixed chunks so long runs emit
    // records incrementally; each replicate is fully self-seeded, so the
    // output is independent of chunking and worker count.
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut records = Vec::new();
    let mut aborted = Vec::new();
    let mut start = 0usize;
    while start < config.replicates {
        let end = (start + chunk).min(config.replicates);
        let outputs: Vec<(usize, Result<ReplicateOutput>)> =
            (start..end).into_par_iter().map(|r| (r, worker(r))).collect();
        let chunk_base = records.len();
        for (r, out) in outputs {
            match out {
                Ok(o) => records.extend(o.records),
                Err(e) => aborted.push((r, e.to_string())),
            }
        }
        on_chunk(&records[chunk_base..])?;
        start = end;
    }
    Ok((records, aborted))
}

fn run_experiment<F>(
    config: &ExperimentConfig,
    kind: ExperimentKind,
    on_chunk: F,
) -> Result<CoverageReport>
where
    F: FnMut(&[RunRecord]) -> Result<()>,
{
    config.validate()?;
    let basis = config.basis()?;
    match kind {
        ExperimentKind::Coverage => {
            let worker = |replicate: usize| {
                run_replicate(config, &basis, replicate, |checkpoint, reference, ensemble, stream, secs| {
                    pointwise_records(config, replicate, checkpoint, reference, ensemble, stream, secs)
                })
            };
            let (records, aborted) = collect_replicates(config, worker, on_chunk)?;
            Ok(CoverageReport::from_records(config, "pointwise_coverage", records, aborted))
        }
        ExperimentKind::Band => {
            let grid = config.band_grid();
            let worker = |replicate: usize| {
                run_replicate(config, &basis, replicate, |checkpoint, reference, ensemble, _stream, secs| {
                    let deviations = ensemble.centered_deviations(reference, &grid)?;
                    let centers: Vec<f64> =
                        grid.iter().map(|&t| reference.eval_averaged(t)).collect();
                    let band = simultaneous_band(
                        &grid,
                        &centers,
                        &deviations,
                        config.level,
                        config.band_mode,
                    )?;
                    let covered =
                        band.covers(|t| truth_eval(config.case_id, t).unwrap_or(f64::NAN));
                    Ok(vec![RunRecord {
                        replicate,
                        checkpoint,
                        method: "band".to_string(),
                        covered,
                        length: band.mean_width(),
                        seconds: secs,
                    }])
                })
            };
            let (records, aborted) = collect_replicates(config, worker, on_chunk)?;
            Ok(CoverageReport::from_records(config, "simultaneous_band", records, aborted))
        }
    }
}

/// Pointwise-interval coverage experiment: per replicate and checkpoint,
/// build normal and percentile intervals and record whether the truth is
/// covered. Failed replicates are recorded, not dropped.
pub fn coverage_experiment(config: &ExperimentConfig) -> Result<CoverageReport> {
    run_experiment(config, ExperimentKind::Coverage, |_| Ok(()))
}

/// Simultaneous-band experiment: coverage means the truth stays inside the
/// band at every grid point; length is the mean band width.
pub fn band_experiment(config: &ExperimentConfig) -> Result<CoverageReport> {
    run_experiment(config, ExperimentKind::Band, |_| Ok(()))
}

/// Experiment with a callback invoked after each parallel chunk of
/// replicates completes (in replicate order), for incremental emission.
pub fn experiment_with_progress<F>(
    config: &ExperimentConfig,
    kind: ExperimentKind,
    on_chunk: F,
) -> Result<CoverageReport>
where
    F: FnMut(&[RunRecord]) -> Result<()>,
{
    run_experiment(config, kind, on_chunk)
}

/// Two-sample Kolmogorov distance: sup over the merged support of the
/// absolute empirical-CDF difference.
pub fn kolmogorov_distance(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::State("Kolmogorov distance of an empty sample".into()));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while ia < a.len() || ib < b.len() {
        let t = match (a.get(ia), b.get(ib)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while ia < a.len() && a[ia] <= t {
            ia += 1;
        }
        while ib < b.len() && b[ib] <= t {
            ib += 1;
        }
        sup = sup.max((ia as f64 / na - ib as f64 / nb).abs());
    }
    Ok(sup)
}

/// Configuration of the bootstrap-consistency probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyProbeConfig {
    pub case_id: u8,
    pub n: usize,
    pub data_replicates: usize,
    pub ensemble_size: usize,
    pub z0: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub truncation: usize,
    pub master_seed: u64,
}

/// Compare the Monte-Carlo sampling distribution of the rescaled, centered
/// estimator at `z0` against the conditional bootstrap distribution on one
/// dataset, via the Kolmogorov distance.
///
/// Uses the horizon-optimal constant step `n^(-1/(alpha+1))`. The estimator
/// is centered at its Monte-Carlo mean, which absorbs the shared leading
/// bias on both sides.
pub fn bootstrap_consistency_probe(cfg: &ConsistencyProbeConfig) -> Result<f64> {
    let basis = Arc::new(MercerBasisSpec::new(cfg.alpha, cfg.truncation, true)?);
    let schedule = StepSchedule::constant_for_horizon(cfg.alpha)?;
    let gamma = schedule.step_size(1, Some(cfg.n))?;
    let scale = ((cfg.n as f64) * (cfg.n as f64 * gamma).powf(-1.0 / cfg.alpha)).sqrt();

    // (a) Sampling distribution across data replicates.
    let estimates: Result<Vec<f64>> = (0..cfg.data_replicates)
        .into_par_iter()
        .map(|r| {
            let stream = gen_stream(cfg.case_id, cfg.n, cfg.sigma2, cfg.master_seed, r)?;
            let mut traj = SgdTrajectory::new(Arc::clone(&basis));
            for (i, &(x, y)) in stream.iter().enumerate() {
                traj.update(x, y, schedule.step_size(i + 1, Some(cfg.n))?)?;
            }
            Ok(traj.eval_averaged(cfg.z0))
        })
        .collect();
    let estimates = estimates?;
    let center = mean(&estimates);
    let sampling: Vec<f64> = estimates.iter().map(|e| scale * (e - center)).collect();

    // (b) Conditional bootstrap distribution on replicate 0's dataset.
    let stream = gen_stream(cfg.case_id, cfg.n, cfg.sigma2, cfg.master_seed, 0)?;
    let boot_seed =
        CounterRng::substream(cfg.master_seed, "consistency-ensemble", cfg.n as u64).next_u64();
    let mut reference = SgdTrajectory::new(Arc::clone(&basis));
    let mut ensemble = BootstrapEnsemble::new(
        Arc::clone(&basis),
        cfg.ensemble_size,
        MultiplierLaw::GaussianUnit,
        boot_seed,
    )?;
    for (i, &(x, y)) in stream.iter().enumerate() {
        ensemble.ingest_with_reference(&mut reference, x, y, schedule.step_size(i + 1, Some(cfg.n))?)?;
    }
    let devs = ensemble.centered_deviations(&reference, &[cfg.z0])?;
    let conditional: Vec<f64> = devs.iter().map(|row| scale * row[0]).collect();

    kolmogorov_distance(&sampling, &conditional)
}

/// Pointwise interval built from a fresh single run of the estimator plus
/// ensemble over a stream; convenience used by the CLI and tests.
pub fn single_run_interval(
    config: &ExperimentConfig,
    point: f64,
) -> Result<(ConfidenceInterval, ConfidenceInterval)> {
    config.validate()?;
    let basis = config.basis()?;
    let stream = config.gen_stream(0)?;
    let seed = CounterRng::substream(config.master_seed, "ensemble", 0).next_u64();
    let mut reference = SgdTrajectory::new(Arc::clone(&basis));
    let mut ensemble =
        BootstrapEnsemble::new(Arc::clone(&basis), config.ensemble_size, config.law, seed)?;
    for (i, &(x, y)) in stream.iter().enumerate() {
        ensemble.ingest_with_reference(&mut reference, x, y, config.schedule.step_size(i + 1, Some(config.n))?)?;
    }
    let center = reference.eval_averaged(point);
    let evals: Vec<f64> = ensemble.averaged_values(&[point]).iter().map(|row| row[0]).collect();
    Ok((
        normal_interval(center, &evals, config.level)?,
        percentile_interval(center, &evals, config.level)?,
    ))
}

/// Theory context matching an experiment configuration (shared kernel,
/// schedule, horizon, and noise variance), with the case truth attached.
pub fn theory_context_for(config: &ExperimentConfig) -> Result<TheoryContext> {
    let basis = config.basis()?;
    TheoryContext::new(basis, config.schedule.clone(), config.n, config.sigma2)?
        .with_target(move |x| truth_eval(config.case_id, x).unwrap_or(f64::NAN))
}
