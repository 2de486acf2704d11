//! Synthetic-control effect estimation.
//!
//! The treated series' pre-period is regressed on the control series (plus
//! an intercept); the fitted model predicts the post-period counterfactual.
//! Uncertainty comes from a residual bootstrap: pre-period residuals are
//! resampled to refit the model and post-period residuals are resampled as
//! observation noise on the counterfactual.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_PRE_PERIOD: usize = 14;
pub const MIN_BOOTSTRAP: usize = 100;
/// Below this pre-period R² the control relationship is considered unstable.
pub const R_SQUARED_WARNING: f64 = 0.5;
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CausalError {
    #[error("series {name:?}: {message}")]
    InvalidSeries { name: String, message: String },
    #[error("at least one control series is required")]
    NoControls,
    #[error("control {name:?} is not aligned with the treated series: {message}")]
    Misaligned { name: String, message: String },
    #[error("control design is singular (rank {rank} of {columns}); add controls that are not collinear or constant")]
    Singular { rank: usize, columns: usize },
    #[error("at least {MIN_BOOTSTRAP} bootstrap replicates are required, got {0}")]
    TooFewReplicates(usize),
    #[error("counterfactual total {0} is not positive; relative effect is undefined")]
    UndefinedEffect(f64),
    #[error(
        "window of {weeks} week(s) needs {needed} post-period points, only {available} available"
    )]
    WindowTooLong {
        weeks: usize,
        needed: usize,
        available: usize,
    },
    #[error("post-period length mismatch: {0}")]
    PostLength(String),
    #[error("{path}: {message}")]
    Table { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub intervention_index: usize,
}

impl MetricSeries {
    pub fn new(
        name: impl Into<String>,
        values: Vec<f64>,
        intervention_index: usize,
    ) -> Result<Self, CausalError> {
        let s = Self {
            name: name.into(),
            values,
            intervention_index,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CausalError> {
        let bad = |message: String| CausalError::InvalidSeries {
            name: self.name.clone(),
            message,
        };
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(bad(format!(
                "value {v} is not a finite non-negative number"
            )));
        }
        if !(0 < self.intervention_index && self.intervention_index < self.values.len()) {
            return Err(bad(format!(
                "intervention index {} must lie strictly inside 0..{}",
                self.intervention_index,
                self.values.len()
            )));
        }
        if self.intervention_index < MIN_PRE_PERIOD {
            return Err(bad(format!(
                "pre-period has {} points, at least {MIN_PRE_PERIOD} required",
                self.intervention_index
            )));
        }
        Ok(())
    }

    pub fn pre(&self) -> &[f64] {
        &self.values[..self.intervention_index]
    }

    pub fn post(&self) -> &[f64] {
        &self.values[self.intervention_index..]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            intervention_index: self.intervention_index,
        }
    }
}

/// A fitted synthetic control.
#[derive(Debug, Clone)]
pub struct ControlModel {
    pub intercept: f64,
    /// One weight per control, in input order.
    pub weights: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub r_squared: f64,
    /// Maps a pre-period response vector to `[intercept, weights..]`.
    pseudo_inverse: DMatrix<f64>,
}

fn design(rows: usize, columns: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, columns.len() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            columns[c - 1][r]
        }
    })
}

pub fn fit_control(
    treated: &MetricSeries,
    controls: &[MetricSeries],
) -> Result<ControlModel, CausalError> {
    treated.validate()?;
    if controls.is_empty() {
        return Err(CausalError::NoControls);
    }
    for c in controls {
        c.validate()?;
        if c.values.len() != treated.values.len()
            || c.intervention_index != treated.intervention_index
        {
            return Err(CausalError::Misaligned {
                name: c.name.clone(),
                message: format!(
                    "length {} / intervention {} vs {} / {}",
                    c.values.len(),
                    c.intervention_index,
                    treated.values.len(),
                    treated.intervention_index
                ),
            });
        }
    }
    let n = treated.intervention_index;
    let pre: Vec<&[f64]> = controls.iter().map(|c| c.pre()).collect();
    let x = design(n, &pre);
    let columns = x.ncols();
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd.rank(RANK_TOLERANCE * max_sv.max(f64::MIN_POSITIVE));
    if rank < columns || n < columns {
        return Err(CausalError::Singular { rank, columns });
    }
    let pseudo_inverse = svd
        .pseudo_inverse(RANK_TOLERANCE * max_sv)
        .map_err(|_| CausalError::Singular { rank, columns })?;

    let y = DVector::from_column_slice(treated.pre());
    let beta = &pseudo_inverse * &y;
    let fitted_v = &x * &beta;
    let residuals: Vec<f64> = (&y - &fitted_v).iter().copied().collect();
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    };
    if r_squared < R_SQUARED_WARNING {
        log::warn!(
            "pre-period R² is {r_squared:.3}; the relationship between {} and its controls may not hold after the intervention",
            treated.name
        );
    }
    Ok(ControlModel {
        intercept: beta[0],
        weights: beta.iter().skip(1).copied().collect(),
        residuals,
        fitted: fitted_v.iter().copied().collect(),
        r_squared,
        pseudo_inverse,
    })
}

impl ControlModel {
    fn predict_with(beta: &[f64], controls: &[&[f64]], len: usize) -> Vec<f64> {
        (0..len)
            .map(|t| {
                beta[0]
                    + controls
                        .iter()
                        .zip(&beta[1..])
                        .map(|(c, w)| c[t] * w)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, controls: &[&[f64]]) -> Result<Vec<f64>, CausalError> {
        if controls.len() != self.weights.len() {
            return Err(CausalError::PostLength(format!(
                "model has {} controls, got {}",
                self.weights.len(),
                controls.len()
            )));
        }
        let len = controls.first().map_or(0, |c| c.len());
        if controls.iter().any(|c| c.len() != len) {
            return Err(CausalError::PostLength(
                "control series differ in length".into(),
            ));
        }
        let mut beta = vec![self.intercept];
        beta.extend(&self.weights);
        Ok(Self::predict_with(&beta, controls, len))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEstimate {
    /// Percent.
    pub relative_effect: f64,
    /// Percent of bootstrap replicates whose effect has the point estimate's
    /// sign (a zero estimate counts as non-negative).
    pub prob_causal: f64,
    pub counterfactual: Vec<f64>,
    pub window_weeks: usize,
    /// 2.5th and 97.5th percentiles of the replicate effects, percent.
    pub interval: [f64; 2],
}

impl CausalEstimate {
    /// `(actual, counterfactual, actual - counterfactual)` per post point.
    pub fn plot_rows(&self, actual: &[f64]) -> Vec<(f64, f64, f64)> {
        actual
            .iter()
            .zip(&self.counterfactual)
            .map(|(&a, &c)| (a, c, a - c))
            .collect()
    }
}

fn relative_effect(actual_total: f64, counterfactual_total: f64) -> f64 {
    100.0 * (actual_total - counterfactual_total) / counterfactual_total
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn estimate_effect(
    model: &ControlModel,
    treated_post: &[f64],
    controls_post: &[&[f64]],
    n_boot: usize,
    rng_seed: u64,
) -> Result<CausalEstimate, CausalError> {
    if n_boot < MIN_BOOTSTRAP {
        return Err(CausalError::TooFewReplicates(n_boot));
    }
    let counterfactual = model.predict(controls_post)?;
    if counterfactual.len() != treated_post.len() {
        return Err(CausalError::PostLength(format!(
            "treated has {} post points, controls {}",
            treated_post.len(),
            counterfactual.len()
        )));
    }
    let actual_total: f64 = treated_post.iter().sum();
    let cf_total: f64 = counterfactual.iter().sum();
    if !(cf_total > 0.0) {
        return Err(CausalError::UndefinedEffect(cf_total));
    }
    let effect = relative_effect(actual_total, cf_total);

    let n = model.residuals.len();
    let m = treated_post.len();
    let mut replicates: Vec<f64> = (0..n_boot as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(b);
            let y_star = DVector::from_iterator(
                n,
                model
                    .fitted
                    .iter()
                    .map(|f| f + model.residuals[rng.random_range(0..n)]),
            );
            let beta_star: Vec<f64> = (&model.pseudo_inverse * y_star).iter().copied().collect();
            let cf_star: f64 = ControlModel::predict_with(&beta_star, controls_post, m)
                .into_iter()
                .map(|v| v + model.residuals[rng.random_range(0..n)])
                .sum();
            relative_effect(actual_total, cf_star)
        })
        .collect();

    let consistent = replicates
        .iter()
        .filter(|r| if effect >= 0.0 { **r >= 0.0 } else { **r < 0.0 })
        .count();
    replicates.sort_by(|a, b| a.total_cmp(b));
    Ok(CausalEstimate {
        relative_effect: effect,
        prob_causal: 100.0 * consistent as f64 / n_boot as f64,
        counterfactual,
        window_weeks: m.div_ceil(7),
        interval: [
            percentile(&replicates, 0.025),
            percentile(&replicates, 0.975),
        ],
    })
}

/// Estimates over cumulative post windows of `windows[i]` weeks each.
pub fn wearout_scan(
    treated: &MetricSeries,
    controls: &[MetricSeries],
    model: &ControlModel,
    windows: &[usize],
    n_boot: usize,
    rng_seed: u64,
) -> Result<Vec<(usize, CausalEstimate)>, CausalError> {
    let available = treated.post().len();
    windows
        .iter()
        .map(|&weeks| {
            let needed = weeks * 7;
            if weeks == 0 || needed > available {
                return Err(CausalError::WindowTooLong {
                    weeks,
                    needed,
                    available,
                });
            }
            let post: Vec<&[f64]> = controls.iter().map(|c| &c.post()[..needed]).collect();
            let mut est =
                estimate_effect(model, &treated.post()[..needed], &post, n_boot, rng_seed)?;
            est.window_weeks = weeks;
            Ok((weeks, est))
        })
        .collect()
}

/// Fits on the pre-period and estimates over the whole post-period.
pub fn analyze(
    treated: &MetricSeries,
    controls: &[MetricSeries],
    n_boot: usize,
    rng_seed: u64,
) -> Result<(ControlModel, CausalEstimate), CausalError> {
    let model = fit_control(treated, controls)?;
    let post: Vec<&[f64]> = controls.iter().map(|c| c.post()).collect();
    let est = estimate_effect(&model, treated.post(), &post, n_boot, rng_seed)?;
    Ok((model, est))
}

/// Multiplicative lift applied to post-period actuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Lift {
    None,
    /// Fractional lift on every post day, e.g. 0.2 for +20%.
    Uniform(f64),
    /// `initial * factor^week` on post day `t` in week `t / 7`.
    Decaying {
        initial: f64,
        weekly_factor: f64,
    },
}

impl Lift {
    pub fn on_day(&self, post_day: usize) -> f64 {
        match *self {
            Lift::None => 0.0,
            Lift::Uniform(l) => l,
            Lift::Decaying {
                initial,
                weekly_factor,
            } => initial * weekly_factor.powi((post_day / 7) as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub days: usize,
    pub intervention_index: usize,
    pub n_controls: usize,
    /// Typical daily count.
    pub level: f64,
    /// AR(1) coefficient of the shared demand factor.
    pub ar: f64,
    /// Relative swing of the shared factor.
    pub factor_scale: f64,
    pub lift: Lift,
}

impl Default for PanelSpec {
    fn default() -> Self {
        Self {
            days: 140,
            intervention_index: 112,
            n_controls: 4,
            level: 10_000.0,
            ar: 0.8,
            factor_scale: 0.1,
            lift: Lift::None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub treated: MetricSeries,
    pub controls: Vec<MetricSeries>,
    /// Treated post-period before the lift was applied.
    pub untreated_post: Vec<f64>,
}

/// Treated and control series driven by one AR(1) demand factor and a
/// weekly cycle, with count-like (sqrt level) noise.
pub fn generate_panel(spec: &PanelSpec, seed: u64) -> Result<Panel, CausalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let innovation_sd = (1.0 - spec.ar * spec.ar).max(1e-6).sqrt();
    let mut f = 0.0;
    let factor: Vec<f64> = (0..spec.days)
        .map(|_| {
            f = spec.ar * f + innovation_sd * std_normal.sample(&mut rng);
            f
        })
        .collect();
    let weekly = [0.0, 0.02, 0.03, 0.01, -0.01, -0.04, -0.01];
    let series = |level: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..spec.days)
            .map(|t| {
                let mean = level * (1.0 + spec.factor_scale * factor[t] + weekly[t % 7]);
                (mean + mean.max(0.0).sqrt() * std_normal.sample(rng)).max(0.0)
            })
            .collect()
    };
    let controls_raw: Vec<Vec<f64>> = (0..spec.n_controls)
        .map(|_| {
            let level = spec.level * rng.random_range(0.5..1.5);
            series(level, &mut rng)
        })
        .collect();
    let mut treated = series(spec.level, &mut rng);
    let untreated_post = treated[spec.intervention_index..].to_vec();
    for (d, v) in treated[spec.intervention_index..].iter_mut().enumerate() {
        *v *= 1.0 + spec.lift.on_day(d);
    }
    let controls = controls_raw
        .into_iter()
        .enumerate()
        .map(|(i, v)| MetricSeries::new(format!("control_{i}"), v, spec.intervention_index))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Panel {
        treated: MetricSeries::new("treated", treated, spec.intervention_index)?,
        controls,
        untreated_post,
    })
}

/// A `date,<col>,<col>..` table of daily values.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub dates: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl SeriesTable {
    pub fn read(path: &Path) -> Result<Self, CausalError> {
        let fail = |message: String| CausalError::Table {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
        let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
        if headers.len() < 2 {
            return Err(fail(
                "expected a date column and at least one value column".into(),
            ));
        }
        let mut dates = Vec::new();
        let mut columns: Vec<(String, Vec<f64>)> = headers
            .iter()
            .skip(1)
            .map(|h| (h.to_string(), Vec::new()))
            .collect();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| fail(e.to_string()))?;
            dates.push(record.get(0).unwrap_or_default().to_string());
            for (j, (name, values)) in columns.iter_mut().enumerate() {
                let cell = record.get(j + 1).unwrap_or_default().trim();
                let v: f64 = cell.parse().map_err(|_| {
                    fail(format!(
                        "row {}: column {name:?}: {cell:?} is not a number",
                        i + 2
                    ))
                })?;
                values.push(v);
            }
        }
        Ok(Self { dates, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Position of `date` in the date column.
    pub fn index_of(&self, date: &str) -> Option<usize> {
        self.dates.iter().position(|d| d == date)
    }

    /// Splits into a treated series and every other column as a control.
    pub fn split(
        &self,
        treated: &str,
        intervention_index: usize,
    ) -> Result<(MetricSeries, Vec<MetricSeries>), CausalError> {
        let mut t = None;
        let mut controls = Vec::new();
        for (name, values) in &self.columns {
            let s = MetricSeries::new(name.clone(), values.clone(), intervention_index)?;
            if name == treated {
                t = Some(s);
            } else {
                controls.push(s);
            }
        }
        let t = t.ok_or_else(|| CausalError::InvalidSeries {
            name: treated.to_string(),
            message: "no such column".into(),
        })?;
        Ok((t, controls))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(name: &str, values: Vec<f64>, idx: usize) -> MetricSeries {
        MetricSeries::new(name, values, idx).unwrap()
    }

    fn wiggle(n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|t| 100.0 + 20.0 * (t as f64 * 0.7 + phase).sin() + t as f64 * 0.3)
            .collect()
    }

    #[test]
    fn series_validation() {
        assert!(MetricSeries::new("x", vec![1.0; 20], 14).is_ok());
        assert!(MetricSeries::new("x", vec![1.0; 20], 13).is_err());
        assert!(MetricSeries::new("x", vec![1.0; 20], 20).is_err());
        assert!(MetricSeries::new("x", vec![-1.0; 20], 15).is_err());
    }

    #[test]
    fn identical_series_fit_exactly() {
        let c = series("c", wiggle(30, 0.0), 20);
        let m = fit_control(&c, std::slice::from_ref(&c)).unwrap();
        assert_abs_diff_eq!(m.weights[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.intercept, 0.0, epsilon = 1e-9);
        assert!(m.residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn exact_linear_relation() {
        let c = series("c", wiggle(30, 0.0), 20);
        let t = series("t", c.values.iter().map(|v| 2.0 * v + 5.0).collect(), 20);
        let m = fit_control(&t, &[c]).unwrap();
        assert_abs_diff_eq!(m.weights[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.intercept, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_design_rejected() {
        let c = series("c", wiggle(30, 0.0), 20);
        let twin = series("twin", c.values.iter().map(|v| v * 3.0).collect(), 20);
        let flat = series("flat", vec![7.0; 30], 20);
        let t = series("t", wiggle(30, 1.0), 20);
        assert!(matches!(
            fit_control(&t, &[c.clone(), twin]),
            Err(CausalError::Singular { .. })
        ));
        assert!(matches!(
            fit_control(&t, &[flat]),
            Err(CausalError::Singular { .. })
        ));
        assert!(matches!(fit_control(&t, &[]), Err(CausalError::NoControls)));
        let short = series("s", wiggle(31, 0.0), 20);
        assert!(matches!(
            fit_control(&t, &[short]),
            Err(CausalError::Misaligned { .. })
        ));
    }

    #[test]
    fn no_change_gives_zero_effect() {
        let c = series("c", wiggle(40, 0.0), 28);
        let t = series("t", c.values.iter().map(|v| 2.0 * v + 5.0).collect(), 28);
        let m = fit_control(&t, std::slice::from_ref(&c)).unwrap();
        let e = estimate_effect(&m, t.post(), &[c.post()], 200, 1).unwrap();
        assert_abs_diff_eq!(e.relative_effect, 0.0, epsilon = 1e-9);
        assert_eq!(e.counterfactual.len(), 12);
        assert!(matches!(
            estimate_effect(&m, t.post(), &[c.post()], 99, 1),
            Err(CausalError::TooFewReplicates(99))
        ));
    }

    #[test]
    fn nonpositive_counterfactual_rejected() {
        let c = series("c", wiggle(40, 0.0), 28);
        let t = series("t", c.values.iter().map(|v| 2.0 * v + 5.0).collect(), 28);
        let m = fit_control(&t, std::slice::from_ref(&c)).unwrap();
        let zeros = vec![0.0; 12];
        // 2 * 0 + 5 > 0, so push the control negative to drive the prediction below zero
        let neg: Vec<f64> = zeros.iter().map(|_| -10.0).collect();
        assert!(matches!(
            estimate_effect(&m, &zeros, &[&neg], 100, 1),
            Err(CausalError::UndefinedEffect(_))
        ));
    }

    #[test]
    fn panel_fits_well_and_recovers_uniform_lift() {
        let spec = PanelSpec {
            lift: Lift::Uniform(0.2),
            ..Default::default()
        };
        let panel = generate_panel(&spec, 3).unwrap();
        let (model, est) = analyze(&panel.treated, &panel.controls, 200, 5).unwrap();
        assert!(model.r_squared >= 0.8, "r² {}", model.r_squared);
        assert!(
            (est.relative_effect - 20.0).abs() < 3.0,
            "{}",
            est.relative_effect
        );
        assert!(est.prob_causal >= 95.0);
        assert!(est.interval[0] <= est.relative_effect && est.relative_effect <= est.interval[1]);
    }

    #[test]
    fn scale_invariance_and_determinism() {
        let panel = generate_panel(&PanelSpec::default(), 8).unwrap();
        let (_, a) = analyze(&panel.treated, &panel.controls, 150, 2).unwrap();
        let scaled: Vec<_> = panel.controls.iter().map(|c| c.scaled(3.5)).collect();
        let (_, b) = analyze(&panel.treated.scaled(3.5), &scaled, 150, 2).unwrap();
        assert_abs_diff_eq!(a.relative_effect, b.relative_effect, epsilon = 1e-9);
        let (_, again) = analyze(&panel.treated, &panel.controls, 150, 2).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn wearout_windows() {
        let spec = PanelSpec {
            lift: Lift::Decaying {
                initial: 0.1,
                weekly_factor: 0.5,
            },
            ..Default::default()
        };
        let panel = generate_panel(&spec, 4).unwrap();
        let model = fit_control(&panel.treated, &panel.controls).unwrap();
        let scan =
            wearout_scan(&panel.treated, &panel.controls, &model, &[1, 2, 4], 100, 9).unwrap();
        assert!(scan
            .windows(2)
            .all(|w| w[0].1.relative_effect > w[1].1.relative_effect));

        let single = wearout_scan(&panel.treated, &panel.controls, &model, &[4], 100, 9).unwrap();
        let post: Vec<&[f64]> = panel.controls.iter().map(|c| c.post()).collect();
        let plain = estimate_effect(&model, panel.treated.post(), &post, 100, 9).unwrap();
        assert_eq!(single[0].1.relative_effect, plain.relative_effect);
        assert_eq!(single[0].1.prob_causal, plain.prob_causal);

        assert!(matches!(
            wearout_scan(&panel.treated, &panel.controls, &model, &[5], 100, 9),
            Err(CausalError::WindowTooLong { weeks: 5, .. })
        ));
    }

    #[test]
    fn table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut text = String::from("date,atc,ctl\n");
        for d in 0..20 {
            text.push_str(&format!("2024-01-{:02},{},{}\n", d + 1, 10 + d, 5 + 2 * d));
        }
        std::fs::write(&path, text).unwrap();
        let table = SeriesTable::read(&path).unwrap();
        assert_eq!(table.index_of("2024-01-15"), Some(14));
        let (t, c) = table.split("atc", 15).unwrap();
        assert_eq!(t.values[3], 13.0);
        assert_eq!(c[0].name, "ctl");
        assert!(table.split("nope", 15).is_err());
        std::fs::write(&path, "date,a\n2024-01-01,x\n").unwrap();
        assert!(matches!(
            SeriesTable::read(&path),
            Err(CausalError::Table { .. })
        ));
    }
}
