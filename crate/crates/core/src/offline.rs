//! Offline kernel-ridge baseline with residual-bootstrap intervals, plus a
//! cost accountant for the online-vs-offline growth comparison.
//!
//! The offline comparator fits `(G + t lambda I) c = y` over the same Mercer
//! kernel the online estimator uses, so both methods share one hypothesis
//! space. Bootstrap refits solve the same ridge system for synthetic
//! responses; the stored factorization is reused because the matrix does not
//! change between refits. The cost accountant nevertheless charges the full
//! dense-solve price per modeled refit, which is what an offline method
//! would pay refitting from scratch at every arrival.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::bootstrap::{BootstrapEnsemble, MultiplierLaw};
use crate::error::{Error, Result};
use crate::inference::{normal_interval, percentile_interval, ConfidenceInterval};
use crate::kernel::MercerBasisSpec;
use crate::rng::CounterRng;
use crate::sgd::{SgdTrajectory, StepSchedule};

const GRAM_JITTER: f64 = 1e-10;

/// Dense Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
struct Cholesky {
    n: usize,
    /// Lower-triangular factor, row-major, full square storage.
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor `a` (row-major, n x n). Fails if a pivot is not positive.
    fn factor(a: &[f64], n: usize) -> Result<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Numerical(format!(
                            "ridge system not positive definite at pivot {i} (value {sum})"
                        )));
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    /// Solve `A x = b` via forward and back substitution.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut sum = x[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..n {
                sum -= self.l[k * n + i] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        x
    }
}

/// An offline kernel-ridge fit: design points, dual coefficients, and the
/// retained factorization for bootstrap refits.
#[derive(Debug, Clone)]
pub struct KrrFit {
    kernel: Arc<MercerBasisSpec>,
    design_points: Vec<f64>,
    dual_coeffs: Vec<f64>,
    fitted_values: Vec<f64>,
    lambda: f64,
    residual_sd: f64,
    factor: Cholesky,
}

/// Residual-bootstrap interval outcome: the interval plus refit accounting.
#[derive(Debug, Clone)]
pub struct BaselineInterval {
    pub interval: ConfidenceInterval,
    pub refits: usize,
    pub failed_refits: usize,
}

/// Offline interval flavor: bootstrap normal or bootstrap percentile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Normal,
    Percentile,
}

/// Solve the ridge system `(G + t lambda I) c = y` over the Mercer kernel.
pub fn krr_fit(data: &[(f64, f64)], lambda: f64, kernel: Arc<MercerBasisSpec>) -> Result<KrrFit> {
    let t = data.len();
    if t == 0 {
        return Err(Error::State("kernel ridge fit needs at least one observation".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("ridge parameter must be positive, got {lambda}")));
    }
    let xs: Vec<f64> = data.iter().map(|d| d.0).collect();
    let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
    if xs.iter().any(|x| !(0.0..=1.0).contains(x)) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Data("offline fit requires x in [0,1] and finite y".into()));
    }

    let mut gram = vec![0.0; t * t];
    for i in 0..t {
        for j in 0..=i {
            let v = kernel.kernel_eval(xs[i], xs[j]);
            gram[i * t + j] = v;
            gram[j * t + i] = v;
        }
    }
    let mut system = gram.clone();
    let shift = t as f64 * lambda + GRAM_JITTER;
    for i in 0..t {
        system[i * t + i] += shift;
    }
    let factor = Cholesky::factor(&system, t)?;
    let dual_coeffs = factor.solve(&ys);

    // Residual of the linear solve, relative to the right-hand side.
    let mut max_resid = 0.0f64;
    let mut max_rhs = 0.0f64;
    for i in 0..t {
        let mut acc = 0.0;
        for j in 0..t {
            acc += system[i * t + j] * dual_coeffs[j];
        }
        max_resid = max_resid.max((acc - ys[i]).abs());
        max_rhs = max_rhs.max(ys[i].abs());
    }
    if max_resid > 1e-8 * max_rhs.max(1.0) {
        return Err(Error::Numerical(format!(
            "ridge solve residual {max_resid:.3e} exceeds tolerance"
        )));
    }

    let fitted_values: Vec<f64> = (0..t)
        .map(|i| (0..t).map(|j| gram[i * t + j] * dual_coeffs[j]).sum())
        .collect();
    let residual_sd = (ys
        .iter()
        .zip(fitted_values.iter())
        .map(|(y, f)| (y - f) * (y - f))
        .sum::<f64>()
        / t as f64)
        .sqrt();

    Ok(KrrFit { kernel, design_points: xs, dual_coeffs, fitted_values, lambda, residual_sd, factor })
}

impl KrrFit {
    pub fn len(&self) -> usize {
        self.design_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design_points.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn residual_sd(&self) -> f64 {
        self.residual_sd
    }

    pub fn dual_coeffs(&self) -> &[f64] {
        &self.dual_coeffs
    }

    pub fn fitted_values(&self) -> &[f64] {
        &self.fitted_values
    }

    /// Representer evaluation `sum_j c_j K(X_j, x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.dual_coeffs
            .iter()
            .zip(self.design_points.iter())
            .map(|(c, xj)| c * self.kernel.kernel_eval(*xj, x))
            .sum()
    }

    /// Residual-bootstrap interval at `z0`: J synthetic responses
    /// `fit + Normal(0, residual_sd^2)` at the original design, refit, and
    /// an interval from the refit evaluations.
    pub fn residual_bootstrap_interval(
        &self,
        refits: usize,
        level: f64,
        z0: f64,
        method: BaselineMethod,
        rng: &mut CounterRng,
    ) -> Result<BaselineInterval> {
        if refits < 2 {
            return Err(Error::InsufficientEnsemble { needed: 2, got: refits });
        }
        let t = self.len();
        let center = self.eval(z0);
        let kcol: Vec<f64> =
            self.design_points.iter().map(|&xj| self.kernel.kernel_eval(xj, z0)).collect();
        let mut evals = Vec::with_capacity(refits);
        let mut failed = 0usize;
        let mut synthetic = vec![0.0; t];
        for _ in 0..refits {
            for (s, f) in synthetic.iter_mut().zip(self.fitted_values.iter()) {
                *s = f + rng.next_normal(0.0, self.residual_sd);
            }
            // Same ridge matrix, new right-hand side.
            let coeffs = self.factor.solve(&synthetic);
            let value: f64 = coeffs.iter().zip(kcol.iter()).map(|(c, k)| c * k).sum();
            if value.is_finite() {
                evals.push(value);
            } else {
                failed += 1;
            }
        }
        if evals.len() < refits.div_ceil(2) {
            return Err(Error::Numerical(format!(
                "{failed} of {refits} bootstrap refits failed"
            )));
        }
        let interval = match method {
            BaselineMethod::Normal => normal_interval(center, &evals, level)?,
            BaselineMethod::Percentile => percentile_interval(center, &evals, level)?,
        };
        Ok(BaselineInterval { interval, refits, failed_refits: failed })
    }
}

/// Timing-bench configuration.
#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub checkpoints: Vec<usize>,
    pub ensemble_size: usize,
    pub case_id: u8,
    pub sigma2: f64,
    pub alpha: f64,
    pub truncation: usize,
    pub master_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            checkpoints: vec![250, 500, 1000, 2000],
            ensemble_size: 50,
            case_id: 1,
            sigma2: 0.2,
            alpha: 2.0,
            truncation: 256,
            master_seed: 90210,
        }
    }
}

/// One cost row per (checkpoint, method).
#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub t: usize,
    pub method: String,
    pub cumulative_seconds: f64,
    pub op_count: f64,
}

/// Growth-shape report: cumulative cost rows and fitted log-log slopes.
#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub config: BenchConfig,
    pub rows: Vec<CostRow>,
    /// Slope of cumulative modeled operation count vs t, online path.
    pub online_opcount_slope: f64,
    /// Slope of cumulative modeled operation count vs t, offline refits.
    pub offline_opcount_slope: f64,
    pub online_wall_slope: f64,
    pub offline_wall_slope: f64,
}

impl CostReport {
    /// CSV rows `t,method,cumulative_seconds,op_count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,method,cumulative_seconds,op_count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.t, r.method, r.cumulative_seconds, r.op_count
            ));
        }
        out
    }
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Online-vs-offline cumulative cost comparison.
///
/// Online: one ensemble of J perturbed trajectories plus the reference runs
/// through the stream; cumulative wall time is recorded at each checkpoint
/// and the modeled operation count is the exact kernel-expansion count
/// `(J+1) t(t-1)/2`. Offline: at each checkpoint a fresh ridge fit plus J
/// bootstrap refit solves is timed; the modeled operation count charges the
/// refit-per-arrival price `sum_{s<=t} (J+1)(s^3/3 + s^2)` an offline method
/// would pay. Growth exponents come from log-log regression over the
/// checkpoints.
pub fn timing_bench(config: &BenchConfig) -> Result<CostReport> {
    if config.checkpoints.is_empty() || !config.checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config("bench checkpoints must be increasing and nonempty".into()));
    }
    let n = *config.checkpoints.last().unwrap();
    let kernel = Arc::new(MercerBasisSpec::new(config.alpha, config.truncation, true)?);
    let stream = crate::sim::gen_stream(config.case_id, n, config.sigma2, config.master_seed, 0)?;
    let schedule = StepSchedule::constant_for_horizon(config.alpha)?;
    let j = config.ensemble_size;

    let mut rows = Vec::new();
    let mut online_ops = Vec::new();
    let mut online_wall = Vec::new();

    // Online pass: cumulative updates, timed once through the stream.
    {
        let seed = CounterRng::substream(config.master_seed, "bench-ensemble", 0).next_u64();
        let mut reference = SgdTrajectory::new(Arc::clone(&kernel));
        let mut ensemble =
            BootstrapEnsemble::new(Arc::clone(&kernel), j, MultiplierLaw::GaussianUnit, seed)?;
        let start = Instant::now();
        let mut next = 0usize;
        for (i, &(x, y)) in stream.iter().enumerate() {
            let t = i + 1;
            ensemble.ingest_with_reference(&mut reference, x, y, schedule.step_size(t, Some(n))?)?;
            if next < config.checkpoints.len() && config.checkpoints[next] == t {
                let secs = start.elapsed().as_secs_f64();
                let tf = t as f64;
                let ops = (j as f64 + 1.0) * tf * (tf - 1.0) / 2.0;
                // The trajectories' own counters certify the model.
                let counted: u64 = ensemble
                    .trajectories()
                    .iter()
                    .map(|tr| tr.kernel_eval_count())
                    .sum::<u64>()
                    + reference.kernel_eval_count();
                debug_assert_eq!(counted as f64, ops);
                rows.push(CostRow {
                    t,
                    method: "online".into(),
                    cumulative_seconds: secs,
                    op_count: ops,
                });
                online_ops.push((tf, ops));
                online_wall.push((tf, secs.max(1e-9)));
                next += 1;
            }
        }
    }

    // Offline pass: fit + J bootstrap refits at each checkpoint.
    let mut offline_ops = Vec::new();
    let mut offline_wall = Vec::new();
    let mut offline_cumulative = 0.0f64;
    for &t in &config.checkpoints {
        let lambda = schedule.effective_regularization(t)?;
        let mut rng = CounterRng::substream(config.master_seed, "bench-offline", t as u64);
        let begin = Instant::now();
        let fit = krr_fit(&stream[..t], lambda, Arc::clone(&kernel))?;
        let z0 = stream[t - 1].0;
        let _ = fit.residual_bootstrap_interval(j, 0.95, z0, BaselineMethod::Percentile, &mut rng)?;
        offline_cumulative += begin.elapsed().as_secs_f64();
        // Refit-per-arrival model: a fresh factorization (s^3/3) plus a
        // bootstrap solve round (s^2 each) at every arrival s <= t.
        let mut ops = 0.0;
        for s in 1..=t {
            let sf = s as f64;
            ops += (j as f64 + 1.0) * (sf * sf * sf / 3.0 + sf * sf);
        }
        let tf = t as f64;
        rows.push(CostRow {
            t,
            method: "offline".into(),
            cumulative_seconds: offline_cumulative,
            op_count: ops,
        });
        offline_ops.push((tf, ops));
        offline_wall.push((tf, offline_cumulative.max(1e-9)));
    }

    Ok(CostReport {
        config: config.clone(),
        online_opcount_slope: loglog_slope(&online_ops),
        offline_opcount_slope: loglog_slope(&offline_ops),
        online_wall_slope: loglog_slope(&online_wall),
        offline_wall_slope: loglog_slope(&offline_wall),
        rows,
    })
}
