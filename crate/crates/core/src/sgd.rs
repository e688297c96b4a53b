//! Streaming kernel least-squares by functional stochastic gradient descent.
//!
//! Each arrival `(x_i, y_i)` appends one coefficient to a growing kernel
//! expansion `f_i = sum_j beta_j K(X_j, .)`; only the newest coefficient is
//! computed, at cost linear in the current expansion size. The averaged
//! estimator is available in closed form from the same raw coefficients, so
//! the whole estimator runs in one pass with O(n) space and O(n^2) total
//! time.
//!
//! The estimator targets functions representable in the kernel's eigenbasis;
//! fast spectral decay of the target (finite RKHS norm, and for the rate
//! guarantees a summable `<f, phi_nu> mu_nu^{-1/2}` sequence) is a caller
//! obligation that is not checked at runtime.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MercerBasisSpec;

/// Step-size rule `gamma_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// Fixed step `gamma_i = gamma`.
    Constant { gamma: f64 },
    /// Fixed step resolved against the horizon: `gamma = n^(-1/(alpha+1))`.
    ConstantForHorizon { alpha: f64 },
    /// Polynomial decay `gamma_i = scale * i^-xi`.
    Polynomial { xi: f64, scale: f64 },
    /// Slightly enlarged polynomial decay `gamma_i = i^(-1/(alpha+1)+epsilon)`
    /// so the bias becomes negligible relative to the noise scale.
    Undersmoothed { epsilon: f64, alpha: f64 },
}

impl StepSchedule {
    /// Constant step; requires `0 < gamma < 1` (the largest eigenvalue of
    /// this kernel family is 1).
    pub fn constant(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Config(format!(
                "constant step size must lie in (0, 1), got {gamma}"
            )));
        }
        Ok(Self::Constant { gamma })
    }

    /// Constant step to be resolved as `n^(-1/(alpha+1))` once the horizon
    /// `n` is known.
    pub fn constant_for_horizon(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::ConstantForHorizon { alpha })
    }

    /// Polynomial decay; requires `0 < xi <= 1/2` and `scale > 0`.
    pub fn polynomial(xi: f64, scale: f64) -> Result<Self> {
        if !(xi > 0.0 && xi <= 0.5) {
            return Err(Error::Config(format!("polynomial exponent must lie in (0, 1/2], got {xi}")));
        }
        if !(scale > 0.0) {
            return Err(Error::Config(format!("polynomial scale must be positive, got {scale}")));
        }
        Ok(Self::Polynomial { xi, scale })
    }

    /// Polynomial decay with the scale chosen so the total step budget over
    /// `n` arrivals matches the horizon-optimal constant step:
    /// `sum_i gamma_i = n * n^(-1/(alpha+1))`.
    pub fn polynomial_budget_matched(xi: f64, n: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if n == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let gamma = (n as f64).powf(-1.0 / (alpha + 1.0));
        let raw_sum: f64 = (1..=n).map(|i| (i as f64).powf(-xi)).sum();
        Self::polynomial(xi, n as f64 * gamma / raw_sum)
    }

    /// Undersmoothed decay; requires `0 < epsilon < 1/(alpha+1)` so the
    /// exponent stays negative.
    pub fn undersmoothed(epsilon: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(epsilon > 0.0 && epsilon < 1.0 / (alpha + 1.0)) {
            return Err(Error::Config(format!(
                "undersmoothing epsilon must lie in (0, {:.4}), got {epsilon}",
                1.0 / (alpha + 1.0)
            )));
        }
        Ok(Self::Undersmoothed { epsilon, alpha })
    }

    /// Step size at arrival `i >= 1`. A horizon is required to resolve
    /// [`StepSchedule::ConstantForHorizon`].
    pub fn step_size(&self, i: usize, horizon: Option<usize>) -> Result<f64> {
        if i == 0 {
            return Err(Error::Config("arrival index starts at 1".into()));
        }
        match *self {
            Self::Constant { gamma } => Ok(gamma),
            Self::ConstantForHorizon { alpha } => {
                let n = horizon.ok_or_else(|| {
                    Error::Config("constant-for-horizon schedule needs a horizon".into())
                })?;
                Ok((n as f64).powf(-1.0 / (alpha + 1.0)))
            }
            Self::Polynomial { xi, scale } => Ok(scale * (i as f64).powf(-xi)),
            Self::Undersmoothed { epsilon, alpha } => {
                Ok((i as f64).powf(-1.0 / (alpha + 1.0) + epsilon))
            }
        }
    }

    /// The implicit ridge parameter after `n` arrivals:
    /// `(sum_{i<=n} gamma_i)^-1`.
    pub fn effective_regularization(&self, n: usize) -> Result<f64> {
        Ok(1.0 / self.total_step(n)?)
    }

    /// Accumulated step size `sum_{i<=n} gamma_i` (the total path length).
    pub fn total_step(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        match *self {
            Self::Constant { gamma } => Ok(n as f64 * gamma),
            Self::ConstantForHorizon { .. } => {
                Ok(n as f64 * self.step_size(1, Some(n))?)
            }
            _ => {
                let mut sum = 0.0;
                for i in (1..=n).rev() {
                    sum += self.step_size(i, Some(n))?;
                }
                Ok(sum)
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::Config(format!("alpha must be finite and > 1, got {alpha}")));
    }
    Ok(())
}

/// One online estimator: stored design points and raw expansion coefficients.
///
/// Single-writer: updates are sequential per arrival; read-only evaluation
/// may run concurrently between updates. Distinct trajectories are fully
/// independent.
#[derive(Debug)]
pub struct SgdTrajectory {
    kernel: Arc<MercerBasisSpec>,
    design_points: Vec<f64>,
    raw_coeffs: Vec<f64>,
    /// Kernel-expansion term evaluations performed so far (update path plus
    /// explicit evaluation calls).
    kernel_evals: AtomicU64,
}

impl Clone for SgdTrajectory {
    fn clone(&self) -> Self {
        Self {
            kernel: Arc::clone(&self.kernel),
            design_points: self.design_points.clone(),
            raw_coeffs: self.raw_coeffs.clone(),
            kernel_evals: AtomicU64::new(self.kernel_evals.load(Ordering::Relaxed)),
        }
    }
}

impl SgdTrajectory {
    pub fn new(kernel: Arc<MercerBasisSpec>) -> Self {
        Self {
            kernel,
            design_points: Vec::new(),
            raw_coeffs: Vec::new(),
            kernel_evals: AtomicU64::new(0),
        }
    }

    pub fn kernel(&self) -> &Arc<MercerBasisSpec> {
        &self.kernel
    }

    /// Number of arrivals consumed.
    pub fn count(&self) -> usize {
        self.raw_coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_coeffs.is_empty()
    }

    pub fn design_points(&self) -> &[f64] {
        &self.design_points
    }

    /// Raw expansion coefficients, one per arrival.
    pub fn raw_coeffs(&self) -> &[f64] {
        &self.raw_coeffs
    }

    /// Cumulative kernel-expansion term evaluations. After `n` arrivals and
    /// no evaluation calls this is exactly `n (n-1) / 2`.
    pub fn kernel_eval_count(&self) -> u64 {
        self.kernel_evals.load(Ordering::Relaxed)
    }

    fn validate_arrival(x: f64, y: f64) -> Result<()> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Data(format!("non-finite arrival ({x}, {y}) rejected")));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Data(format!("design point {x} outside [0, 1] rejected")));
        }
        Ok(())
    }

    /// Consume one arrival: appends `gamma_i * (y - f_{i-1}(x))`.
    ///
    /// Rejects non-finite or out-of-domain arrivals without touching state.
    pub fn update(&mut self, x: f64, y: f64, gamma_i: f64) -> Result<()> {
        self.update_with_multiplier(x, y, gamma_i, 1.0)
    }

    /// Multiplier-perturbed arrival: appends `gamma_i * w_i * (y - f_{i-1}(x))`.
    /// With `w_i = 1` this is exactly [`SgdTrajectory::update`].
    pub fn update_with_multiplier(&mut self, x: f64, y: f64, gamma_i: f64, w_i: f64) -> Result<()> {
        Self::validate_arrival(x, y)?;
        if !(gamma_i > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {gamma_i}")));
        }
        let residual = y - self.eval_raw(x);
        self.design_points.push(x);
        self.raw_coeffs.push(gamma_i * w_i * residual);
        Ok(())
    }

    /// Arrival update against a precomputed kernel column
    /// `column[j] = K(X_j, x)` shared across an ensemble.
    pub(crate) fn update_with_column(
        &mut self,
        x: f64,
        y: f64,
        gamma_i: f64,
        w_i: f64,
        column: &[f64],
    ) {
        debug_assert_eq!(column.len(), self.raw_coeffs.len());
        let mut value = 0.0;
        for (b, k) in self.raw_coeffs.iter().zip(column.iter()) {
            value += b * k;
        }
        self.kernel_evals.fetch_add(column.len() as u64, Ordering::Relaxed);
        self.design_points.push(x);
        self.raw_coeffs.push(gamma_i * w_i * (y - value));
    }

    /// Raw (unaveraged) estimator value `sum_j beta_j K(X_j, x)`;
    /// 0 for an empty trajectory.
    pub fn eval_raw(&self, x: f64) -> f64 {
        let mut value = 0.0;
        for (b, xj) in self.raw_coeffs.iter().zip(self.design_points.iter()) {
            value += b * self.kernel.kernel_eval(*xj, x);
        }
        self.kernel_evals.fetch_add(self.raw_coeffs.len() as u64, Ordering::Relaxed);
        value
    }

    /// Averaged-estimator coefficients `beta_bar_j = (1 - (j-1)/i) beta_j`.
    /// Empty trajectory yields an empty sequence.
    pub fn averaged_coefficients(&self) -> Vec<f64> {
        let i = self.raw_coeffs.len() as f64;
        self.raw_coeffs
            .iter()
            .enumerate()
            .map(|(idx, b)| (1.0 - idx as f64 / i) * b)
            .collect()
    }

    /// Polyak-averaged estimator value at `x`; 0 (and nothing to average)
    /// for an empty trajectory.
    pub fn eval_averaged(&self, x: f64) -> f64 {
        let i = self.raw_coeffs.len() as f64;
        let mut value = 0.0;
        for (idx, (b, xj)) in self.raw_coeffs.iter().zip(self.design_points.iter()).enumerate() {
            value += (1.0 - idx as f64 / i) * b * self.kernel.kernel_eval(*xj, x);
        }
        self.kernel_evals.fetch_add(self.raw_coeffs.len() as u64, Ordering::Relaxed);
        value
    }

    /// Averaged-estimator value against a precomputed kernel column
    /// `column[j] = K(X_j, x)`.
    pub fn eval_averaged_on_column(&self, column: &[f64]) -> f64 {
        debug_assert_eq!(column.len(), self.raw_coeffs.len());
        let i = self.raw_coeffs.len() as f64;
        let mut value = 0.0;
        for (idx, (b, k)) in self.raw_coeffs.iter().zip(column.iter()).enumerate() {
            value += (1.0 - idx as f64 / i) * b * k;
        }
        self.kernel_evals.fetch_add(column.len() as u64, Ordering::Relaxed);
        value
    }
}

/// Kernel columns for a set of evaluation points against shared design
/// points: `columns[m][j] = K(X_j, points[m])`.
pub fn grid_columns(kernel: &MercerBasisSpec, design_points: &[f64], points: &[f64]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|&p| design_points.iter().map(|&xj| kernel.kernel_eval(xj, p)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn small_kernel() -> Arc<MercerBasisSpec> {
        Arc::new(MercerBasisSpec::new(2.0, 16, true).unwrap())
    }

    #[test]
    fn step_size_examples() {
        let poly = StepSchedule::polynomial(1.0 / 3.0, 1.0).unwrap();
        assert!((poly.step_size(8, None).unwrap() - 0.5).abs() < 1e-15);

        let con = StepSchedule::constant_for_horizon(2.0).unwrap();
        let want = 3000f64.powf(-1.0 / 3.0);
        assert!((con.step_size(5, Some(3000)).unwrap() - want).abs() < 1e-15);
        assert!(matches!(con.step_size(5, None), Err(Error::Config(_))));

        let und = StepSchedule::undersmoothed(0.02, 2.0).unwrap();
        assert_eq!(und.step_size(1, None).unwrap(), 1.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::constant(0.0).is_err());
        assert!(StepSchedule::constant(1.0).is_err());
        assert!(StepSchedule::polynomial(0.6, 1.0).is_err());
        assert!(StepSchedule::polynomial(0.3, 0.0).is_err());
        assert!(StepSchedule::undersmoothed(0.5, 2.0).is_err());
    }

    #[test]
    fn steps_nonincreasing() {
        for sched in [
            StepSchedule::polynomial(0.4, 2.5).unwrap(),
            StepSchedule::undersmoothed(0.05, 2.0).unwrap(),
        ] {
            let mut prev = f64::INFINITY;
            for i in 1..200 {
                let g = sched.step_size(i, None).unwrap();
                assert!(g > 0.0 && g <= prev);
                prev = g;
            }
        }
    }

    #[test]
    fn effective_regularization_examples() {
        let con = StepSchedule::constant(0.25).unwrap();
        assert!((con.effective_regularization(40).unwrap() - 1.0 / 10.0).abs() < 1e-15);

        let half = StepSchedule::polynomial(0.5, 1.0).unwrap();
        let want = 1.0 / (1.0 + 1.0 / 2f64.sqrt() + 1.0 / 3f64.sqrt() + 0.5);
        assert!((half.effective_regularization(4).unwrap() - want).abs() < 1e-15);

        // Large-n integral approximation: (1 - xi) n^(xi - 1) within 1%.
        let poly = StepSchedule::polynomial(1.0 / 3.0, 1.0).unwrap();
        let lam = poly.effective_regularization(10_000).unwrap();
        let approx = (1.0 - 1.0 / 3.0) * 10_000f64.powf(1.0 / 3.0 - 1.0);
        assert!((lam / approx - 1.0).abs() < 0.01, "lam {lam} approx {approx}");
    }

    #[test]
    fn budget_matched_polynomial_matches_total_step() {
        let n = 300;
        let sched = StepSchedule::polynomial_budget_matched(1.0 / 3.0, n, 2.0).unwrap();
        let target = n as f64 * (n as f64).powf(-1.0 / 3.0);
        assert!((sched.total_step(n).unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn first_coefficient_is_gamma_y() {
        let mut traj = SgdTrajectory::new(small_kernel());
        traj.update(0.4, 2.0, 0.3).unwrap();
        assert_eq!(traj.raw_coeffs(), &[0.3 * 2.0]);
        assert_eq!(traj.count(), 1);
    }

    #[test]
    fn zero_stream_stays_zero() {
        let mut traj = SgdTrajectory::new(small_kernel());
        let mut rng = CounterRng::from_seed(1);
        for i in 1..=50 {
            traj.update(rng.next_f64(), 0.0, 1.0 / (i as f64 + 1.0)).unwrap();
        }
        assert!(traj.raw_coeffs().iter().all(|&b| b == 0.0));
        assert_eq!(traj.eval_raw(0.5), 0.0);
        assert_eq!(traj.eval_averaged(0.5), 0.0);
    }

    #[test]
    fn bad_arrivals_leave_state_unchanged() {
        let mut traj = SgdTrajectory::new(small_kernel());
        traj.update(0.2, 1.0, 0.5).unwrap();
        let before = traj.raw_coeffs().to_vec();
        assert!(matches!(traj.update(f64::NAN, 1.0, 0.5), Err(Error::Data(_))));
        assert!(matches!(traj.update(0.3, f64::INFINITY, 0.5), Err(Error::Data(_))));
        assert!(matches!(traj.update(1.3, 1.0, 0.5), Err(Error::Data(_))));
        assert_eq!(traj.raw_coeffs(), before.as_slice());
        assert_eq!(traj.count(), 1);
    }

    #[test]
    fn update_matches_function_space_recursion_on_grid() {
        // Independent oracle: track the recursion's values at every arrival
        // point and a 200-point grid, never touching the coefficient form.
        let kernel = small_kernel();
        let xs = [0.15, 0.62, 0.87];
        let ys = [1.0, -0.4, 0.7];
        let gamma = 0.2;

        let grid: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let mut grid_vals = vec![0.0f64; grid.len()];
        let mut point_vals = vec![0.0f64; xs.len()];
        let mut traj = SgdTrajectory::new(Arc::clone(&kernel));
        for i in 0..xs.len() {
            let resid = ys[i] - point_vals[i];
            for (g, v) in grid.iter().zip(grid_vals.iter_mut()) {
                *v += gamma * resid * kernel.kernel_eval(xs[i], *g);
            }
            for (p, v) in xs.iter().zip(point_vals.iter_mut()) {
                *v += gamma * resid * kernel.kernel_eval(xs[i], *p);
            }
            traj.update(xs[i], ys[i], gamma).unwrap();
        }
        for (g, v) in grid.iter().zip(grid_vals.iter()) {
            assert!((traj.eval_raw(*g) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_raw_is_permutation_invariant() {
        let kernel = small_kernel();
        let mut traj = SgdTrajectory::new(Arc::clone(&kernel));
        let mut rng = CounterRng::from_seed(8);
        for i in 1..=50 {
            let g = (i as f64).powf(-1.0 / 3.0);
            traj.update(rng.next_f64(), rng.next_normal(0.0, 1.0), g).unwrap();
        }
        let x = 0.41;
        let direct = traj.eval_raw(x);
        // Re-sum in a shuffled order.
        let mut pairs: Vec<(f64, f64)> = traj
            .design_points()
            .iter()
            .copied()
            .zip(traj.raw_coeffs().iter().copied())
            .collect();
        for i in (1..pairs.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            pairs.swap(i, j);
        }
        let shuffled: f64 = pairs.iter().map(|(xj, b)| b * kernel.kernel_eval(*xj, x)).sum();
        assert!((direct - shuffled).abs() < 1e-12);
    }

    #[test]
    fn averaged_coefficient_identity_small_cases() {
        let mut traj = SgdTrajectory::new(small_kernel());
        traj.update(0.3, 1.0, 0.4).unwrap();
        let one = traj.averaged_coefficients();
        assert_eq!(one, traj.raw_coeffs()); // i = 1: average of one iterate
        traj.update(0.8, -0.5, 0.4).unwrap();
        let two = traj.averaged_coefficients();
        assert_eq!(two[0], traj.raw_coeffs()[0]);
        assert_eq!(two[1], traj.raw_coeffs()[1] / 2.0);
    }

    #[test]
    fn averaged_evaluation_matches_running_average() {
        // Oracle: maintain f_hat and its running average at fixed points via
        // the recursive formula, using only raw coefficients as they appear.
        let kernel = small_kernel();
        let points: Vec<f64> = (0..20).map(|i| (i as f64 + 0.5) / 20.0).collect();
        let mut raw_vals = vec![0.0f64; points.len()];
        let mut avg_vals = vec![0.0f64; points.len()];
        let mut traj = SgdTrajectory::new(Arc::clone(&kernel));
        let mut rng = CounterRng::from_seed(21);
        for i in 1..=100usize {
            let x = rng.next_f64();
            let y = rng.next_normal(0.0, 1.0);
            let g = (i as f64).powf(-1.0 / 3.0);
            traj.update(x, y, g).unwrap();
            let b = *traj.raw_coeffs().last().unwrap();
            for (p, v) in points.iter().zip(raw_vals.iter_mut()) {
                *v += b * kernel.kernel_eval(x, *p);
            }
            let inv = 1.0 / i as f64;
            for (a, r) in avg_vals.iter_mut().zip(raw_vals.iter()) {
                *a = (1.0 - inv) * *a + inv * *r;
            }
        }
        for (p, want) in points.iter().zip(avg_vals.iter()) {
            assert!((traj.eval_averaged(*p) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn averaged_evaluation_matches_stored_iterates() {
        // Brute force: store every iterate's value at x and average.
        let kernel = small_kernel();
        let x = 0.37;
        let mut traj = SgdTrajectory::new(Arc::clone(&kernel));
        let mut rng = CounterRng::from_seed(4);
        let mut iterate_vals = Vec::new();
        for i in 1..=200usize {
            let g = 0.5 * (i as f64).powf(-1.0 / 3.0);
            traj.update(rng.next_f64(), rng.next_normal(0.3, 0.7), g).unwrap();
            iterate_vals.push(traj.eval_raw(x));
        }
        let brute = iterate_vals.iter().sum::<f64>() / iterate_vals.len() as f64;
        assert!((traj.eval_averaged(x) - brute).abs() < 1e-12);
    }

    #[test]
    fn replay_is_bit_identical() {
        let kernel = small_kernel();
        let run = |seed: u64| {
            let mut traj = SgdTrajectory::new(Arc::clone(&kernel));
            let mut rng = CounterRng::from_seed(seed);
            for i in 1..=80usize {
                let g = (i as f64).powf(-0.3);
                traj.update(rng.next_f64(), rng.next_normal(0.0, 1.0), g).unwrap();
            }
            traj.raw_coeffs().to_vec()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn kernel_eval_accounting() {
        let mut traj = SgdTrajectory::new(small_kernel());
        let mut rng = CounterRng::from_seed(2);
        let n = 40u64;
        for i in 1..=n {
            traj.update(rng.next_f64(), 1.0, 1.0 / (i as f64 + 2.0)).unwrap();
        }
        assert_eq!(traj.kernel_eval_count(), n * (n - 1) / 2);
        traj.eval_raw(0.5);
        assert_eq!(traj.kernel_eval_count(), n * (n - 1) / 2 + n);
        traj.eval_averaged(0.5);
        assert_eq!(traj.kernel_eval_count(), n * (n - 1) / 2 + 2 * n);
    }

    #[test]
    fn noiseless_in_span_error_contracts() {
        // Target inside the span of the first 5 eigenfunctions, no noise:
        // sup-grid error of the averaged estimator decreases along a
        // doubling grid of horizons.
        let kernel = small_kernel();
        let coeffs = [0.9, -0.6, 0.4, 0.3, -0.2];
        let truth = |x: f64| -> f64 {
            (1..=5).map(|nu| coeffs[nu - 1] * kernel.eigenfunction(nu, x).unwrap()).sum()
        };
        let grid: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        let mut errs = Vec::new();
        for &n in &[100usize, 200, 400, 800, 1600] {
            let gamma = (n as f64).powf(-1.0 / 3.0);
            let mut traj = SgdTrajectory::new(Arc::clone(&kernel));
            let mut rng = CounterRng::substream(33, "contraction", n as u64);
            for _ in 0..n {
                let x = rng.next_f64();
                traj.update(x, truth(x), gamma).unwrap();
            }
            let err = grid
                .iter()
                .map(|&g| (traj.eval_averaged(g) - truth(g)).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "sup error not decreasing: {errs:?}");
        }
    }

    #[test]
    fn schedule_serde_round_trip() {
        let sched = StepSchedule::undersmoothed(0.02, 2.0).unwrap();
        let json = serde_json::to_string(&sched).unwrap();
        let back: StepSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sched);
    }
}
