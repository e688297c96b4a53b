//! Pointwise confidence intervals and simultaneous confidence bands from
//! bootstrap ensemble evaluations.
//!
//! All constructions are pure functions of the supplied values. Quantiles
//! use the upper order statistic at `ceil(q * J)` with no interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::standard_normal_quantile;

/// Pointwise interval construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Normal,
    Percentile,
}

/// Orientation of the percentile interval endpoints.
///
/// `Corrected` adds both deviation quantiles to the center
/// (`[center + C_{a/2}, center + C_{1-a/2}]`), which is the orientation that
/// delivers nominal coverage. `PaperLiteral` subtracts the lower quantile
/// (`[center - C_{a/2}, center + C_{1-a/2}]`); with symmetric deviations its
/// printed lower endpoint exceeds the upper one, so it is kept only for
/// compatibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileOrientation {
    Corrected,
    PaperLiteral,
}

/// Simultaneous band construction mode. `Symmetric` uses the `1-a` quantile
/// of the max-deviation statistic as a half-width; `PaperLiteral` uses the
/// `a/2` and `1-a/2` quantiles as printed in the source algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    Symmetric,
    PaperLiteral,
}

/// A pointwise confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// A simultaneous confidence band over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub grid: Vec<f64>,
    pub center_values: Vec<f64>,
    pub lower_values: Vec<f64>,
    pub upper_values: Vec<f64>,
    pub level: f64,
    pub mode: BandMode,
}

impl ConfidenceBand {
    /// True when `truth` lies inside the band at every grid point.
    pub fn covers<F: Fn(f64) -> f64>(&self, truth: F) -> bool {
        self.grid.iter().enumerate().all(|(m, &t)| {
            let v = truth(t);
            self.lower_values[m] <= v && v <= self.upper_values[m]
        })
    }

    pub fn mean_width(&self) -> f64 {
        if self.grid.is_empty() {
            return 0.0;
        }
        self.upper_values
            .iter()
            .zip(self.lower_values.iter())
            .map(|(u, l)| u - l)
            .sum::<f64>()
            / self.grid.len() as f64
    }

    /// CSV rows `grid,center,lower,upper,level,mode` with a header line.
    pub fn to_csv(&self) -> String {
        let mode = match self.mode {
            BandMode::Symmetric => "symmetric",
            BandMode::PaperLiteral => "paper_literal",
        };
        let mut out = String::from("grid,center,lower,upper,level,mode\n");
        for (((t, c), l), u) in self
            .grid
            .iter()
            .zip(self.center_values.iter())
            .zip(self.lower_values.iter())
            .zip(self.upper_values.iter())
        {
            out.push_str(&format!("{t},{c},{l},{u},{},{mode}\n", self.level));
        }
        out
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Upper order statistic at `ceil(q * J)` of the sorted sequence.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::State("empirical quantile of an empty sequence".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("quantile order must lie in (0, 1), got {q}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let j = sorted.len();
    let idx = ((q * j as f64).ceil() as usize).clamp(1, j);
    Ok(sorted[idx - 1])
}

/// Normal-theory interval from the bootstrap variance
/// `T = (J-1)^-1 sum_j (eval_j - center)^2`.
pub fn normal_interval(
    center: f64,
    bootstrap_evals: &[f64],
    level: f64,
) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if bootstrap_evals.len() < 2 {
        return Err(Error::InsufficientEnsemble { needed: 2, got: bootstrap_evals.len() });
    }
    let variance = crate::stats::variance_around(bootstrap_evals, center);
    let alpha = 1.0 - level;
    let z = standard_normal_quantile(1.0 - alpha / 2.0);
    let half = z * variance.sqrt();
    Ok(ConfidenceInterval {
        center,
        lower: center - half,
        upper: center + half,
        level,
        method: CiMethod::Normal,
    })
}

/// Percentile interval from bootstrap deviation quantiles (corrected
/// orientation).
pub fn percentile_interval(
    center: f64,
    bootstrap_evals: &[f64],
    level: f64,
) -> Result<ConfidenceInterval> {
    percentile_interval_oriented(center, bootstrap_evals, level, PercentileOrientation::Corrected)
}

/// Percentile interval with an explicit endpoint orientation.
pub fn percentile_interval_oriented(
    center: f64,
    bootstrap_evals: &[f64],
    level: f64,
    orientation: PercentileOrientation,
) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if bootstrap_evals.len() < 2 {
        return Err(Error::InsufficientEnsemble { needed: 2, got: bootstrap_evals.len() });
    }
    let deviations: Vec<f64> = bootstrap_evals.iter().map(|e| e - center).collect();
    let alpha = 1.0 - level;
    let c_lo = empirical_quantile(&deviations, alpha / 2.0)?;
    let c_hi = empirical_quantile(&deviations, 1.0 - alpha / 2.0)?;
    let (lower, upper) = match orientation {
        PercentileOrientation::Corrected => (center + c_lo, center + c_hi),
        PercentileOrientation::PaperLiteral => (center - c_lo, center + c_hi),
    };
    Ok(ConfidenceInterval { center, lower, upper, level, method: CiMethod::Percentile })
}

/// Simultaneous band from the per-trajectory max absolute deviation
/// statistic `s_j = max_m |deviation(j, m)|`.
pub fn simultaneous_band(
    grid: &[f64],
    center_values: &[f64],
    deviation_matrix: &[Vec<f64>],
    level: f64,
    mode: BandMode,
) -> Result<ConfidenceBand> {
    check_level(level)?;
    let m = grid.len();
    if m == 0 {
        return Err(Error::State("band grid is empty".into()));
    }
    if center_values.len() != m {
        return Err(Error::State(format!(
            "grid has {m} points but {} center values supplied",
            center_values.len()
        )));
    }
    if !grid.windows(2).all(|w| w[0] < w[1]) || grid[0] < 0.0 || grid[m - 1] > 1.0 {
        return Err(Error::State("band grid must be strictly increasing within [0, 1]".into()));
    }
    if deviation_matrix.len() < 2 {
        return Err(Error::InsufficientEnsemble { needed: 2, got: deviation_matrix.len() });
    }
    let mut max_stats = Vec::with_capacity(deviation_matrix.len());
    for (j, row) in deviation_matrix.iter().enumerate() {
        if row.len() != m {
            return Err(Error::State(format!(
                "deviation row {j} has {} entries for a {m}-point grid",
                row.len()
            )));
        }
        max_stats.push(row.iter().fold(0.0f64, |acc, d| acc.max(d.abs())));
    }
    let alpha = 1.0 - level;
    let (lower_off, upper_off) = match mode {
        BandMode::Symmetric => {
            let half = empirical_quantile(&max_stats, 1.0 - alpha)?;
            (half, half)
        }
        BandMode::PaperLiteral => (
            empirical_quantile(&max_stats, alpha / 2.0)?,
            empirical_quantile(&max_stats, 1.0 - alpha / 2.0)?,
        ),
    };
    Ok(ConfidenceBand {
        grid: grid.to_vec(),
        center_values: center_values.to_vec(),
        lower_values: center_values.iter().map(|c| c - lower_off).collect(),
        upper_values: center_values.iter().map(|c| c + upper_off).collect(),
        level,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn quantile_order_statistic_convention() {
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&[7.0], 0.3).unwrap(), 7.0);
        assert_eq!(empirical_quantile(&[7.0], 0.9).unwrap(), 7.0);
        assert_eq!(
            empirical_quantile(&[-2.0, -1.0, 0.0, 1.0, 2.0], 0.95).unwrap(),
            2.0
        );
        assert!(matches!(empirical_quantile(&[], 0.5), Err(Error::State(_))));
    }

    #[test]
    fn quantile_ignores_input_order() {
        let a = empirical_quantile(&[3.0, 1.0, 2.0], 0.6).unwrap();
        let b = empirical_quantile(&[1.0, 2.0, 3.0], 0.6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 2.0); // ceil(1.8) = 2nd order statistic
    }

    #[test]
    fn normal_interval_example() {
        let ci = normal_interval(0.0, &[-1.0, 0.0, 1.0], 0.95).unwrap();
        // T = (1 + 0 + 1) / 2 = 1.
        assert!((ci.lower + 1.959_963_984_540_054).abs() < 1e-9);
        assert!((ci.upper - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn normal_interval_degenerate_ensemble() {
        let ci = normal_interval(2.5, &[2.5, 2.5, 2.5], 0.9).unwrap();
        assert_eq!(ci.lower, 2.5);
        assert_eq!(ci.upper, 2.5);
    }

    #[test]
    fn normal_interval_needs_two_evals() {
        assert!(matches!(
            normal_interval(0.0, &[1.0], 0.95),
            Err(Error::InsufficientEnsemble { .. })
        ));
    }

    #[test]
    fn percentile_interval_example() {
        // Deviations {-2,-1,0,1,2} at level 0.90 select the extreme order
        // statistics on both sides.
        let evals = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let ci = percentile_interval(0.0, &evals, 0.90).unwrap();
        assert_eq!(ci.lower, -2.0);
        assert_eq!(ci.upper, 2.0);
    }

    #[test]
    fn percentile_interval_zero_deviations() {
        let ci = percentile_interval(1.5, &[1.5, 1.5, 1.5], 0.95).unwrap();
        assert_eq!(ci.lower, 1.5);
        assert_eq!(ci.upper, 1.5);
    }

    #[test]
    fn paper_literal_orientation_is_reachable() {
        let evals = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let ci = percentile_interval_oriented(
            0.0,
            &evals,
            0.90,
            PercentileOrientation::PaperLiteral,
        )
        .unwrap();
        // Printed form: (center - C_{a/2}, center + C_{1-a/2}) = (2, 2).
        assert_eq!(ci.lower, 2.0);
        assert_eq!(ci.upper, 2.0);
    }

    #[test]
    fn percentile_approaches_normal_for_gaussian_deviations() {
        let mut rng = CounterRng::from_seed(25);
        let evals: Vec<f64> = (0..10_000).map(|_| rng.next_normal(0.0, 1.0)).collect();
        let p = percentile_interval(0.0, &evals, 0.95).unwrap();
        let n = normal_interval(0.0, &evals, 0.95).unwrap();
        assert!((p.lower / n.lower - 1.0).abs() < 0.03, "{} vs {}", p.lower, n.lower);
        assert!((p.upper / n.upper - 1.0).abs() < 0.03, "{} vs {}", p.upper, n.upper);
    }

    #[test]
    fn band_zero_deviations() {
        let grid = [0.25, 0.5, 0.75];
        let centers = [1.0, 2.0, 3.0];
        let devs = vec![vec![0.0; 3]; 4];
        let band = simultaneous_band(&grid, &centers, &devs, 0.95, BandMode::Symmetric).unwrap();
        assert_eq!(band.lower_values, centers.to_vec());
        assert_eq!(band.upper_values, centers.to_vec());
        assert_eq!(band.mean_width(), 0.0);
    }

    #[test]
    fn band_small_ensemble_order_statistic() {
        // J = 2, max stats {1, 3}, level 0.5 symmetric takes the first order
        // statistic as half-width.
        let grid = [0.2, 0.8];
        let centers = [0.0, 0.0];
        let devs = vec![vec![1.0, -0.5], vec![3.0, 2.0]];
        let band = simultaneous_band(&grid, &centers, &devs, 0.5, BandMode::Symmetric).unwrap();
        assert_eq!(band.upper_values[0], 1.0);
        assert_eq!(band.lower_values[0], -1.0);
    }

    #[test]
    fn band_dimension_mismatch() {
        let grid = [0.2, 0.8];
        let centers = [0.0, 0.0];
        let devs = vec![vec![1.0], vec![3.0, 2.0]];
        assert!(matches!(
            simultaneous_band(&grid, &centers, &devs, 0.5, BandMode::Symmetric),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn band_grid_must_increase() {
        let devs = vec![vec![0.0, 0.0], vec![0.1, 0.1]];
        assert!(simultaneous_band(&[0.8, 0.2], &[0.0, 0.0], &devs, 0.9, BandMode::Symmetric)
            .is_err());
    }

    #[test]
    fn wider_level_nests_interval_and_band() {
        let mut rng = CounterRng::from_seed(6);
        let evals: Vec<f64> = (0..500).map(|_| rng.next_normal(0.3, 2.0)).collect();
        for build in [normal_interval, percentile_interval] {
            let narrow = build(0.3, &evals, 0.95).unwrap();
            let wide = build(0.3, &evals, 0.99).unwrap();
            assert!(wide.lower <= narrow.lower && narrow.upper <= wide.upper);
        }
        let grid = [0.1, 0.5, 0.9];
        let centers = [0.0, 0.0, 0.0];
        let devs: Vec<Vec<f64>> =
            (0..200).map(|_| (0..3).map(|_| rng.next_normal(0.0, 1.0)).collect()).collect();
        let narrow = simultaneous_band(&grid, &centers, &devs, 0.95, BandMode::Symmetric).unwrap();
        let wide = simultaneous_band(&grid, &centers, &devs, 0.99, BandMode::Symmetric).unwrap();
        for m in 0..3 {
            assert!(wide.lower_values[m] <= narrow.lower_values[m]);
            assert!(narrow.upper_values[m] <= wide.upper_values[m]);
        }
    }

    #[test]
    fn shift_equivariance() {
        let mut rng = CounterRng::from_seed(13);
        let evals: Vec<f64> = (0..100).map(|_| rng.next_normal(0.0, 1.0)).collect();
        let shift = 3.75;
        let shifted: Vec<f64> = evals.iter().map(|e| e + shift).collect();
        for build in [normal_interval, percentile_interval] {
            let base = build(0.0, &evals, 0.9).unwrap();
            let moved = build(shift, &shifted, 0.9).unwrap();
            assert!((moved.lower - base.lower - shift).abs() < 1e-12);
            assert!((moved.upper - base.upper - shift).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_equivariance_normal() {
        let mut rng = CounterRng::from_seed(14);
        let evals: Vec<f64> = (0..100).map(|_| rng.next_normal(1.0, 1.0)).collect();
        let lam = 2.5;
        let scaled: Vec<f64> = evals.iter().map(|e| e * lam).collect();
        let base = normal_interval(1.0, &evals, 0.9).unwrap();
        let s = normal_interval(lam, &scaled, 0.9).unwrap();
        assert!((s.lower - lam * base.lower).abs() < 1e-10);
        assert!((s.upper - lam * base.upper).abs() < 1e-10);
    }

    #[test]
    fn band_csv_schema() {
        let grid = [0.25, 0.75];
        let centers = [1.0, -1.0];
        let devs = vec![vec![0.5, 0.2], vec![-0.3, 0.4]];
        let band = simultaneous_band(&grid, &centers, &devs, 0.9, BandMode::Symmetric).unwrap();
        let csv = band.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "grid,center,lower,upper,level,mode");
        assert_eq!(csv.lines().count(), 3);
        let json = serde_json::to_value(&band).unwrap();
        assert!(json.get("grid").is_some());
        assert!(json.get("mode").is_some());
    }
}
