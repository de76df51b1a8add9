//! Experiment reports, confidence intervals, and accuracy-curve export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Two-sided 95% standard-normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0).min(phat), (center + half).min(1.0).max(phat))
}

/// Normal-approximation 95% interval for the mean of per-trial fractions,
/// given the per-trial correct counts' sum and sum of squares.
pub fn mean_fraction_interval(sum: u64, sum_sq: u64, trials: u64, units: u64) -> (f64, f64) {
    if trials < 2 {
        return (0.0, 1.0);
    }
    let t = trials as f64;
    let u = units as f64;
    let mean = sum as f64 / (t * u);
    let mean_sq = sum_sq as f64 / (t * u * u);
    let var = ((mean_sq - mean * mean) * t / (t - 1.0)).max(0.0);
    let half = Z_95 * (var / t).sqrt();
    ((mean - half).max(0.0), (mean + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    RandomUser,
    Matching,
    Songs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Wilson,
    NormalMean,
}

/// Outcome of one Monte Carlo experiment.
///
/// `accuracy = successes / observations`. In the random-user setting each
/// trial is one observation; in the matching setting a trial contributes
/// one observation per user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub setting: Setting,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    pub trials: u64,
    pub observations: u64,
    pub successes: u64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_method: CiMethod,
    pub master_seed: u64,
    pub config: serde_json::Value,
    /// Only recorded on request, so reports stay byte-reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl ExperimentReport {
    pub(crate) fn random_user(method: impl Into<String>, trials: u64, successes: u64, master_seed: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials);
        Self {
            setting: Setting::RandomUser,
            method: method.into(),
            epochs: None,
            trials,
            observations: trials,
            successes,
            accuracy: if trials == 0 {
                0.0
            } else {
                successes as f64 / trials as f64
            },
            ci_low,
            ci_high,
            ci_method: CiMethod::Wilson,
            master_seed,
            config: serde_json::Value::Null,
            wall_time_ms: None,
        }
    }

    pub(crate) fn matching(
        method: impl Into<String>,
        trials: u64,
        users: u64,
        successes: u64,
        sum_sq: u64,
        master_seed: u64,
    ) -> Self {
        let observations = trials * users;
        let (ci_low, ci_high) = mean_fraction_interval(successes, sum_sq, trials, users);
        let accuracy = successes as f64 / observations as f64;
        Self {
            setting: Setting::Matching,
            method: method.into(),
            epochs: None,
            trials,
            observations,
            successes,
            accuracy,
            ci_low: ci_low.min(accuracy),
            ci_high: ci_high.max(accuracy),
            ci_method: CiMethod::NormalMean,
            master_seed,
            config: serde_json::Value::Null,
            wall_time_ms: None,
        }
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Self {
        self.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = Some(epochs);
        self
    }

    /// Binomial standard deviation of the accuracy estimate.
    pub fn binomial_sigma(&self) -> f64 {
        let p = self.accuracy;
        (p * (1.0 - p) / self.observations.max(1) as f64).sqrt()
    }
}

/// One row of an accuracy-vs-epochs curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub r: usize,
    pub method: String,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
}

/// Flattens reports into curve rows sorted by `r`, then method name.
/// Reports without an epoch count are placed at `r = 0`.
pub fn emit_accuracy_curve(reports: &[ExperimentReport]) -> Vec<CurveRow> {
    let mut rows: Vec<CurveRow> = reports
        .iter()
        .map(|rep| CurveRow {
            r: rep.epochs.unwrap_or(0),
            method: rep.method.clone(),
            accuracy: rep.accuracy,
            ci_low: rep.ci_low,
            ci_high: rep.ci_high,
            trials: rep.trials,
        })
        .collect();
    rows.sort_by(|a, b| a.r.cmp(&b.r).then_with(|| a.method.cmp(&b.method)));
    rows
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_json<W: Write>(rows: &[CurveRow], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)?;
    Ok(())
}
