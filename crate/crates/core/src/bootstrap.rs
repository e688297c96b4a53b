//! Online multiplier bootstrap: J perturbed trajectories sharing the data
//! stream.
//!
//! Each trajectory multiplies its stochastic gradient by an i.i.d. random
//! weight with unit mean drawn from its own counter-based substream, so the
//! ensemble is reproducible and independent of worker parallelism. All
//! trajectories see identical arrivals; the kernel column for a new arrival
//! is computed once and shared.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MercerBasisSpec;
use crate::rng::CounterRng;
use crate::sgd::{grid_columns, SgdTrajectory};

/// Bootstrap multiplier distribution. All variants have mean one; only
/// `GaussianUnit` also has variance one. `TwoPoint` (variance 4) and
/// `ShiftedUniform` (variance 4/3) are implemented as commonly used, without
/// rescaling. `DegenerateOne` (`w = 1`, variance 0) reduces every perturbed
/// trajectory to the plain estimator and exists for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierLaw {
    /// `W ~ Normal(1, 1)`: mean 1, variance 1.
    GaussianUnit,
    /// `P(W=3) = P(W=-1) = 1/2`: mean 1, variance 4.
    TwoPoint,
    /// `W ~ Uniform[-1, 3]`: mean 1, variance 4/3.
    ShiftedUniform,
    /// `W = 1` identically.
    DegenerateOne,
}

impl MultiplierLaw {
    /// Population variance of the law.
    pub fn variance(&self) -> f64 {
        match self {
            Self::GaussianUnit => 1.0,
            Self::TwoPoint => 4.0,
            Self::ShiftedUniform => 4.0 / 3.0,
            Self::DegenerateOne => 0.0,
        }
    }

    /// Whether the law satisfies the unit-variance requirement of the
    /// bootstrap theory.
    pub fn has_unit_variance(&self) -> bool {
        matches!(self, Self::GaussianUnit)
    }

    /// One multiplier draw.
    pub fn draw(&self, rng: &mut CounterRng) -> f64 {
        match self {
            Self::GaussianUnit => rng.next_normal(1.0, 1.0),
            Self::TwoPoint => {
                if rng.next_u64() & 1 == 0 {
                    3.0
                } else {
                    -1.0
                }
            }
            Self::ShiftedUniform => -1.0 + 4.0 * rng.next_f64(),
            Self::DegenerateOne => 1.0,
        }
    }
}

/// Free-function form of [`MultiplierLaw::draw`].
pub fn draw_multiplier(law: MultiplierLaw, rng: &mut CounterRng) -> f64 {
    law.draw(rng)
}

/// J independently seeded perturbed trajectories updated in lockstep.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    trajectories: Vec<SgdTrajectory>,
    streams: Vec<CounterRng>,
    law: MultiplierLaw,
    master_seed: u64,
    arrivals: usize,
}

impl BootstrapEnsemble {
    /// Build an ensemble of `size` trajectories. Trajectory `j` draws its
    /// multipliers from the substream `(master_seed, "multiplier", j)`.
    pub fn new(
        kernel: Arc<MercerBasisSpec>,
        size: usize,
        law: MultiplierLaw,
        master_seed: u64,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        let trajectories = (0..size).map(|_| SgdTrajectory::new(Arc::clone(&kernel))).collect();
        let streams =
            (0..size).map(|j| CounterRng::substream(master_seed, "multiplier", j as u64)).collect();
        Ok(Self { trajectories, streams, law, master_seed, arrivals: 0 })
    }

    pub fn size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn law(&self) -> MultiplierLaw {
        self.law
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn arrivals(&self) -> usize {
        self.arrivals
    }

    pub fn trajectories(&self) -> &[SgdTrajectory] {
        &self.trajectories
    }

    /// Shared design points (identical across trajectories).
    pub fn design_points(&self) -> &[f64] {
        self.trajectories[0].design_points()
    }

    fn prepare_arrival(&mut self, x: f64, y: f64, gamma_i: f64) -> Result<Vec<f64>> {
        // Validate once up front so the update is all-or-none across
        // trajectories.
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Data(format!("non-finite arrival ({x}, {y}) rejected")));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Data(format!("design point {x} outside [0, 1] rejected")));
        }
        if !(gamma_i > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {gamma_i}")));
        }
        let kernel = self.trajectories[0].kernel();
        let column: Vec<f64> =
            self.design_points().iter().map(|&xj| kernel.kernel_eval(xj, x)).collect();
        Ok(column)
    }

    /// Feed one arrival to every trajectory (serial, trajectory-major).
    pub fn ingest(&mut self, x: f64, y: f64, gamma_i: f64) -> Result<()> {
        let column = self.prepare_arrival(x, y, gamma_i)?;
        let law = self.law;
        for (traj, stream) in self.trajectories.iter_mut().zip(self.streams.iter_mut()) {
            let w = law.draw(stream);
            traj.update_with_column(x, y, gamma_i, w, &column);
        }
        self.arrivals += 1;
        Ok(())
    }

    /// Feed one arrival to an unperturbed reference trajectory and the
    /// whole ensemble, sharing one kernel column. Equivalent to calling
    /// `reference.update(x, y, gamma_i)` followed by
    /// [`BootstrapEnsemble::ingest`].
    pub fn ingest_with_reference(
        &mut self,
        reference: &mut SgdTrajectory,
        x: f64,
        y: f64,
        gamma_i: f64,
    ) -> Result<()> {
        if reference.count() != self.arrivals {
            return Err(Error::State(format!(
                "reference has {} arrivals, ensemble has {}",
                reference.count(),
                self.arrivals
            )));
        }
        let column = self.prepare_arrival(x, y, gamma_i)?;
        reference.update_with_column(x, y, gamma_i, 1.0, &column);
        let law = self.law;
        for (traj, stream) in self.trajectories.iter_mut().zip(self.streams.iter_mut()) {
            let w = law.draw(stream);
            traj.update_with_column(x, y, gamma_i, w, &column);
        }
        self.arrivals += 1;
        Ok(())
    }

    /// Feed one arrival with trajectories updated in parallel. Each
    /// trajectory owns its multiplier stream, so the result is bit-identical
    /// to [`BootstrapEnsemble::ingest`].
    pub fn ingest_parallel(&mut self, x: f64, y: f64, gamma_i: f64) -> Result<()> {
        let column = self.prepare_arrival(x, y, gamma_i)?;
        let law = self.law;
        self.trajectories
            .par_iter_mut()
            .zip(self.streams.par_iter_mut())
            .for_each(|(traj, stream)| {
                let w = law.draw(stream);
                traj.update_with_column(x, y, gamma_i, w, &column);
            });
        self.arrivals += 1;
        Ok(())
    }

    /// Averaged-estimator values of every trajectory at `points`
    /// (J x |points|), sharing one kernel column set.
    pub fn averaged_values(&self, points: &[f64]) -> Vec<Vec<f64>> {
        let kernel = self.trajectories[0].kernel();
        let columns = grid_columns(kernel, self.design_points(), points);
        self.trajectories
            .iter()
            .map(|traj| columns.iter().map(|col| traj.eval_averaged_on_column(col)).collect())
            .collect()
    }

    /// Centered bootstrap deviations against a reference trajectory:
    /// entry `(j, m) = f_bar^{b,j}(points[m]) - f_bar(points[m])`.
    pub fn centered_deviations(
        &self,
        reference: &SgdTrajectory,
        points: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        if reference.count() != self.arrivals {
            return Err(Error::State(format!(
                "reference has {} arrivals, ensemble has {}",
                reference.count(),
                self.arrivals
            )));
        }
        let kernel = reference.kernel();
        let columns = grid_columns(kernel, reference.design_points(), points);
        let center: Vec<f64> =
            columns.iter().map(|col| reference.eval_averaged_on_column(col)).collect();
        Ok(self
            .trajectories
            .iter()
            .map(|traj| {
                columns
                    .iter()
                    .zip(center.iter())
                    .map(|(col, c)| traj.eval_averaged_on_column(col) - c)
                    .collect()
            })
            .collect())
    }

    /// JSON checkpoint: arrival count, ensemble size, law, and per-trajectory
    /// averaged values on a named grid.
    pub fn checkpoint_json(&self, grid: &[f64]) -> serde_json::Value {
        serde_json::json!({
            "t": self.arrivals,
            "J": self.size(),
            "law": self.law,
            "grid": grid,
            "trajectories": self.averaged_values(grid),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn kernel() -> Arc<MercerBasisSpec> {
        Arc::new(MercerBasisSpec::new(2.0, 16, true).unwrap())
    }

    #[test]
    fn multiplier_population_moments() {
        // TwoPoint mean: (3 - 1) / 2 = 1; ShiftedUniform mean: (-1 + 3)/2 = 1.
        assert_eq!(MultiplierLaw::TwoPoint.variance(), 4.0);
        assert_eq!(MultiplierLaw::ShiftedUniform.variance(), 4.0 / 3.0);
        assert_eq!(MultiplierLaw::GaussianUnit.variance(), 1.0);
        assert!(MultiplierLaw::GaussianUnit.has_unit_variance());
        assert!(!MultiplierLaw::TwoPoint.has_unit_variance());
    }

    #[test]
    fn multiplier_sample_means_near_one() {
        // Sample mean over 1e6 draws within 4 standard errors of 1.
        for law in [
            MultiplierLaw::GaussianUnit,
            MultiplierLaw::TwoPoint,
            MultiplierLaw::ShiftedUniform,
        ] {
            let mut rng = CounterRng::substream(99, "law", law.variance().to_bits());
            let n = 1_000_000usize;
            let mut sum = 0.0;
            for _ in 0..n {
                sum += law.draw(&mut rng);
            }
            let mean = sum / n as f64;
            let se = (law.variance() / n as f64).sqrt();
            assert!((mean - 1.0).abs() < 4.0 * se, "{law:?}: mean {mean}");
        }
    }

    #[test]
    fn gaussian_law_sample_variance_near_one() {
        let mut rng = CounterRng::from_seed(3);
        let draws: Vec<f64> =
            (0..200_000).map(|_| MultiplierLaw::GaussianUnit.draw(&mut rng)).collect();
        assert!((stats::sample_variance(&draws) - 1.0).abs() < 0.02);
    }

    #[test]
    fn unit_multiplier_reproduces_plain_sgd() {
        let kernel = kernel();
        let mut plain = SgdTrajectory::new(Arc::clone(&kernel));
        let mut perturbed = SgdTrajectory::new(Arc::clone(&kernel));
        let mut rng = CounterRng::from_seed(12);
        for i in 1..=60usize {
            let x = rng.next_f64();
            let y = rng.next_normal(0.0, 1.0);
            let g = (i as f64).powf(-1.0 / 3.0);
            plain.update(x, y, g).unwrap();
            perturbed.update_with_multiplier(x, y, g, 1.0).unwrap();
        }
        assert_eq!(plain.raw_coeffs(), perturbed.raw_coeffs());
    }

    #[test]
    fn zero_first_multiplier_zeroes_first_coefficient() {
        let mut traj = SgdTrajectory::new(kernel());
        traj.update_with_multiplier(0.5, 2.0, 0.3, 0.0).unwrap();
        assert_eq!(traj.raw_coeffs(), &[0.0]);
    }

    #[test]
    fn perturbed_update_matches_grid_recursion() {
        // Brute-force function-space recursion with multipliers on a grid.
        let kernel = kernel();
        let mut rng = CounterRng::from_seed(77);
        let n = 40usize;
        let xs: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.next_normal(0.0, 1.0)).collect();
        let ws: Vec<f64> = (0..n).map(|_| rng.next_normal(1.0, 1.0)).collect();

        let grid: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let mut grid_vals = vec![0.0f64; grid.len()];
        let mut point_vals = vec![0.0f64; n];
        let mut traj = SgdTrajectory::new(Arc::clone(&kernel));
        for i in 0..n {
            let g = (i as f64 + 1.0).powf(-1.0 / 3.0);
            let resid = g * ws[i] * (ys[i] - point_vals[i]);
            for (gp, v) in grid.iter().zip(grid_vals.iter_mut()) {
                *v += resid * kernel.kernel_eval(xs[i], *gp);
            }
            for (p, v) in xs.iter().zip(point_vals.iter_mut()) {
                *v += resid * kernel.kernel_eval(xs[i], *p);
            }
            traj.update_with_multiplier(xs[i], ys[i], g, ws[i]).unwrap();
        }
        for (gp, v) in grid.iter().zip(grid_vals.iter()) {
            assert!((traj.eval_raw(*gp) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_ensemble_equals_standalone_trajectory() {
        let kernel = kernel();
        let seed = 5u64;
        let mut ens = BootstrapEnsemble::new(Arc::clone(&kernel), 1, MultiplierLaw::GaussianUnit, seed)
            .unwrap();
        let mut standalone = SgdTrajectory::new(Arc::clone(&kernel));
        let mut wstream = CounterRng::substream(seed, "multiplier", 0);
        let mut data = CounterRng::from_seed(31);
        for i in 1..=50usize {
            let x = data.next_f64();
            let y = data.next_normal(0.0, 1.0);
            let g = (i as f64).powf(-0.3);
            ens.ingest(x, y, g).unwrap();
            let w = MultiplierLaw::GaussianUnit.draw(&mut wstream);
            standalone.update_with_multiplier(x, y, g, w).unwrap();
        }
        assert_eq!(ens.trajectories()[0].raw_coeffs(), standalone.raw_coeffs());
    }

    #[test]
    fn all_zero_stream_gives_zero_ensemble() {
        let mut ens =
            BootstrapEnsemble::new(kernel(), 3, MultiplierLaw::GaussianUnit, 1).unwrap();
        let mut rng = CounterRng::from_seed(2);
        for _ in 0..30 {
            ens.ingest(rng.next_f64(), 0.0, 0.1).unwrap();
        }
        for traj in ens.trajectories() {
            assert!(traj.raw_coeffs().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn serial_and_parallel_ingest_are_bit_identical() {
        let kernel = kernel();
        let build = |parallel: bool| {
            let mut ens =
                BootstrapEnsemble::new(Arc::clone(&kernel), 24, MultiplierLaw::GaussianUnit, 7)
                    .unwrap();
            let mut rng = CounterRng::from_seed(40);
            for i in 1..=120usize {
                let x = rng.next_f64();
                let y = rng.next_normal(0.0, 1.0);
                let g = (i as f64).powf(-1.0 / 3.0);
                if parallel {
                    ens.ingest_parallel(x, y, g).unwrap();
                } else {
                    ens.ingest(x, y, g).unwrap();
                }
            }
            ens
        };
        let serial = build(false);
        let parallel = build(true);
        for (a, b) in serial.trajectories().iter().zip(parallel.trajectories().iter()) {
            assert_eq!(a.raw_coeffs(), b.raw_coeffs());
        }
    }

    #[test]
    fn seed_isolation() {
        // Changing trajectory j's stream alters only trajectory j.
        let kernel = kernel();
        let run = |seed: u64| {
            let mut ens =
                BootstrapEnsemble::new(Arc::clone(&kernel), 3, MultiplierLaw::GaussianUnit, seed)
                    .unwrap();
            let mut rng = CounterRng::from_seed(8);
            for i in 1..=40usize {
                ens.ingest(rng.next_f64(), rng.next_normal(0.0, 1.0), (i as f64).powf(-0.3))
                    .unwrap();
            }
            ens
        };
        let base = run(1);
        let mut alt = run(1);
        // Rebuild trajectory 1 under a different substream by hand.
        let mut fresh = SgdTrajectory::new(Arc::clone(&kernel));
        let mut wstream = CounterRng::substream(999, "multiplier", 1);
        let mut rng = CounterRng::from_seed(8);
        for i in 1..=40usize {
            let x = rng.next_f64();
            let y = rng.next_normal(0.0, 1.0);
            fresh
                .update_with_multiplier(
                    x,
                    y,
                    (i as f64).powf(-0.3),
                    MultiplierLaw::GaussianUnit.draw(&mut wstream),
                )
                .unwrap();
        }
        alt.trajectories[1] = fresh;
        assert_eq!(base.trajectories()[0].raw_coeffs(), alt.trajectories()[0].raw_coeffs());
        assert_eq!(base.trajectories()[2].raw_coeffs(), alt.trajectories()[2].raw_coeffs());
        assert_ne!(base.trajectories()[1].raw_coeffs(), alt.trajectories()[1].raw_coeffs());
    }

    #[test]
    fn degenerate_law_gives_zero_deviations() {
        let kernel = kernel();
        let mut ens =
            BootstrapEnsemble::new(Arc::clone(&kernel), 2, MultiplierLaw::DegenerateOne, 3).unwrap();
        let mut reference = SgdTrajectory::new(Arc::clone(&kernel));
        let mut rng = CounterRng::from_seed(14);
        for i in 1..=50usize {
            let x = rng.next_f64();
            let y = rng.next_normal(0.0, 1.0);
            let g = (i as f64).powf(-1.0 / 3.0);
            ens.ingest(x, y, g).unwrap();
            reference.update(x, y, g).unwrap();
        }
        let devs = ens.centered_deviations(&reference, &[0.2, 0.5, 0.8]).unwrap();
        for row in devs {
            for d in row {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn noiseless_unit_weights_cancel_leading_bias() {
        // With epsilon = 0 and w = 1 the perturbed and plain trajectories
        // share the bias exactly: centered deviations vanish.
        let kernel = kernel();
        let truth = |x: f64| 0.7 * kernel.eigenfunction(1, x).unwrap()
            - 0.2 * kernel.eigenfunction(4, x).unwrap();
        let mut ens =
            BootstrapEnsemble::new(Arc::clone(&kernel), 3, MultiplierLaw::DegenerateOne, 5).unwrap();
        let mut reference = SgdTrajectory::new(Arc::clone(&kernel));
        let mut rng = CounterRng::from_seed(6);
        for i in 1..=80usize {
            let x = rng.next_f64();
            let g = (i as f64).powf(-1.0 / 3.0);
            ens.ingest(x, truth(x), g).unwrap();
            reference.update(x, truth(x), g).unwrap();
        }
        let devs = ens.centered_deviations(&reference, &[0.1, 0.4, 0.9]).unwrap();
        for row in devs {
            for d in row {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn count_mismatch_is_a_state_error() {
        let kernel = kernel();
        let mut ens =
            BootstrapEnsemble::new(Arc::clone(&kernel), 2, MultiplierLaw::GaussianUnit, 3).unwrap();
        let mut reference = SgdTrajectory::new(Arc::clone(&kernel));
        ens.ingest(0.5, 1.0, 0.2).unwrap();
        ens.ingest(0.25, 0.0, 0.2).unwrap();
        reference.update(0.5, 1.0, 0.2).unwrap();
        assert!(matches!(
            ens.centered_deviations(&reference, &[0.5]),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn bad_arrival_leaves_every_trajectory_unchanged() {
        let mut ens =
            BootstrapEnsemble::new(kernel(), 3, MultiplierLaw::GaussianUnit, 3).unwrap();
        ens.ingest(0.5, 1.0, 0.2).unwrap();
        let before: Vec<Vec<f64>> =
            ens.trajectories().iter().map(|t| t.raw_coeffs().to_vec()).collect();
        assert!(ens.ingest(f64::NAN, 1.0, 0.2).is_err());
        assert!(ens.ingest(0.5, 1.0, -0.1).is_err());
        let after: Vec<Vec<f64>> =
            ens.trajectories().iter().map(|t| t.raw_coeffs().to_vec()).collect();
        assert_eq!(before, after);
        assert_eq!(ens.arrivals(), 1);
    }

    #[test]
    fn ensemble_mean_tracks_reference_at_small_n() {
        // Conditional unbiasedness proxy: ensemble mean of averaged values
        // within 4 Monte-Carlo standard errors of the reference.
        let kernel = kernel();
        let truth = |x: f64| (3.0 * x - 1.0) * 0.5;
        let mut ens =
            BootstrapEnsemble::new(Arc::clone(&kernel), 2000, MultiplierLaw::GaussianUnit, 11)
                .unwrap();
        let mut reference = SgdTrajectory::new(Arc::clone(&kernel));
        let mut rng = CounterRng::from_seed(19);
        for i in 1..=50usize {
            let x = rng.next_f64();
            let y = truth(x) + rng.next_normal(0.0, 0.2f64.sqrt());
            let g = (i as f64).powf(-1.0 / 3.0);
            ens.ingest(x, y, g).unwrap();
            reference.update(x, y, g).unwrap();
        }
        let points = [0.1, 0.3, 0.5, 0.7, 0.9];
        let values = ens.averaged_values(&points);
        for (m, &p) in points.iter().enumerate() {
            let col: Vec<f64> = values.iter().map(|row| row[m]).collect();
            let mc_mean = stats::mean(&col);
            let mc_se = (stats::sample_variance(&col) / col.len() as f64).sqrt();
            let center = reference.eval_averaged(p);
            assert!(
                (mc_mean - center).abs() < 4.0 * mc_se,
                "point {p}: mean {mc_mean}, center {center}, se {mc_se}"
            );
        }
    }
}
