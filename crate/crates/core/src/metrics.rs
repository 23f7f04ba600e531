//! Accuracy and calibration scores for Gaussian predictive distributions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{NilmError, Result};
use crate::sparse_gp::PredictiveDistribution;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Nominal levels averaged by [`ece`]: 0.05, 0.10, ..., 0.95.
pub fn ece_levels() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub msll: f64,
    pub ce95: f64,
    pub ece: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    pub nominal_levels: Vec<f64>,
    pub empirical_coverage: Vec<f64>,
}

impl ReliabilityCurve {
    /// Two-column CSV `nominal,empirical`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("nominal,empirical\n");
        for (a, b) in self.nominal_levels.iter().zip(&self.empirical_coverage) {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }
}

fn check(pred: &PredictiveDistribution, truth: &[f64]) -> Result<()> {
    if pred.mean.len() != truth.len() || pred.variance.len() != truth.len() {
        return Err(NilmError::Input(format!(
            "{} predictions but {} truths",
            pred.mean.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(NilmError::Input("no points to score".into()));
    }
    Ok(())
}

fn check_variances(pred: &PredictiveDistribution) -> Result<()> {
    match pred.variance.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        Some(v) => Err(NilmError::Input(format!("predictive variance must be positive, got {v}"))),
        None => Ok(()),
    }
}

pub fn mae(pred: &PredictiveDistribution, truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let total: f64 = pred.mean.iter().zip(truth).map(|(m, y)| (m - y).abs()).sum();
    Ok(total / truth.len() as f64)
}

/// Mean negative Gaussian log predictive density (smaller is better).
pub fn msll(pred: &PredictiveDistribution, truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    check_variances(pred)?;
    let total: f64 = pred
        .mean
        .iter()
        .zip(&pred.variance)
        .zip(truth)
        .map(|((m, v), y)| HALF_LN_2PI + 0.5 * v.ln() + 0.5 * (y - m) * (y - m) / v)
        .sum();
    Ok(total / truth.len() as f64)
}

/// [`msll`] minus the loss of a trivial Gaussian with the given mean and
/// variance (typically the training targets' moments).
pub fn standardized_msll(
    pred: &PredictiveDistribution,
    truth: &[f64],
    baseline_mean: f64,
    baseline_variance: f64,
) -> Result<f64> {
    if !(baseline_variance > 0.0) {
        return Err(NilmError::Input("baseline variance must be positive".into()));
    }
    let model = msll(pred, truth)?;
    let trivial: f64 = truth
        .iter()
        .map(|y| {
            HALF_LN_2PI
                + 0.5 * baseline_variance.ln()
                + 0.5 * (y - baseline_mean) * (y - baseline_mean) / baseline_variance
        })
        .sum::<f64>()
        / truth.len() as f64;
    Ok(model - trivial)
}

/// Half-width multiplier of the central Gaussian interval holding `level`.
pub fn central_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(NilmError::Input(format!("level must lie in (0, 1), got {level}")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// Fraction of truths inside `mean +/- z(level) * sd`.
pub fn coverage(pred: &PredictiveDistribution, truth: &[f64], level: f64) -> Result<f64> {
    check(pred, truth)?;
    check_variances(pred)?;
    let z = central_z(level)?;
    let inside = pred
        .mean
        .iter()
        .zip(&pred.variance)
        .zip(truth)
        .filter(|((m, v), y)| (*y - *m).abs() <= z * v.sqrt())
        .count();
    Ok(inside as f64 / truth.len() as f64)
}

/// `|level - coverage(level)|`.
pub fn coverage_error(pred: &PredictiveDistribution, truth: &[f64], level: f64) -> Result<f64> {
    Ok((level - coverage(pred, truth, level)?).abs())
}

pub fn reliability_curve(
    pred: &PredictiveDistribution,
    truth: &[f64],
    levels: &[f64],
) -> Result<ReliabilityCurve> {
    if levels.is_empty() {
        return Err(NilmError::Input("no levels requested".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NilmError::Input("levels must be strictly increasing".into()));
    }
    let empirical_coverage = levels
        .iter()
        .map(|l| coverage(pred, truth, *l))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReliabilityCurve {
        nominal_levels: levels.to_vec(),
        empirical_coverage,
    })
}

/// Mean absolute coverage error over [`ece_levels`].
pub fn ece(pred: &PredictiveDistribution, truth: &[f64]) -> Result<f64> {
    let levels = ece_levels();
    let curve = reliability_curve(pred, truth, &levels)?;
    let total: f64 = curve
        .nominal_levels
        .iter()
        .zip(&curve.empirical_coverage)
        .map(|(l, c)| (l - c).abs())
        .sum();
    Ok(total / levels.len() as f64)
}

pub fn evaluate(pred: &PredictiveDistribution, truth: &[f64]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        mae: mae(pred, truth)?,
        msll: msll(pred, truth)?,
        ce95: coverage_error(pred, truth, 0.95)?,
        ece: ece(pred, truth)?,
        n_points: truth.len(),
    })
}
