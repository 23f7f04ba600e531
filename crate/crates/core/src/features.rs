//! Model inputs built from a mains series: the scalar reading, a centered
//! window of readings, or a handful of window statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::PowerSeries;
use crate::error::{NilmError, Result};

/// Column names of [`statistical_features`], in order.
pub const STAT_FEATURES: [&str; 7] = ["value", "max", "min", "mean", "kurtosis", "difference", "range"];
/// Column of the window range in [`statistical_features`].
pub const RANGE_COLUMN: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Readings on each side of the center; the window holds `2k + 1`.
    pub half_width_k: usize,
}

impl WindowConfig {
    pub fn new(half_width_k: usize) -> Self {
        WindowConfig { half_width_k }
    }

    pub fn len(&self) -> usize {
        2 * self.half_width_k + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for WindowConfig {
    /// 99-reading windows.
    fn default() -> Self {
        WindowConfig { half_width_k: 49 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: DMatrix<f64>,
    pub timestamps: Vec<i64>,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.rows.ncols()
    }

    fn from_rows(rows: Vec<Vec<f64>>, timestamps: Vec<i64>, feature_names: Vec<String>) -> Self {
        let d = feature_names.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        FeatureMatrix {
            rows: DMatrix::from_row_slice(timestamps.len(), d, &flat),
            timestamps,
            feature_names,
        }
    }

    /// Keeps the rows whose timestamp has a target reading; returns them with
    /// the aligned targets.
    pub fn align(&self, target: &PowerSeries) -> Result<(FeatureMatrix, Vec<f64>)> {
        let mut keep = Vec::new();
        let mut y = Vec::new();
        let mut j = 0;
        for (i, t) in self.timestamps.iter().enumerate() {
            while j < target.len() && target.timestamps[j] < *t {
                j += 1;
            }
            if j < target.len() && target.timestamps[j] == *t {
                keep.push(i);
                y.push(target.watts[j]);
            }
        }
        if keep.is_empty() {
            return Err(NilmError::Data(format!(
                "no feature rows line up with {} readings",
                target.channel_name
            )));
        }
        let rows = self.rows.select_rows(keep.iter());
        let timestamps = keep.iter().map(|&i| self.timestamps[i]).collect();
        Ok((
            FeatureMatrix {
                rows,
                timestamps,
                feature_names: self.feature_names.clone(),
            },
            y,
        ))
    }
}

fn check_len(mains: &PowerSeries, needed: usize) -> Result<()> {
    if mains.is_empty() {
        return Err(NilmError::Input(format!("{}: empty series", mains.channel_name)));
    }
    if mains.len() < needed {
        return Err(NilmError::Input(format!(
            "{}: {} readings, window needs {needed}",
            mains.channel_name,
            mains.len()
        )));
    }
    Ok(())
}

/// One row per reading: `[y_t]`.
pub fn point_features(mains: &PowerSeries) -> Result<FeatureMatrix> {
    check_len(mains, 1)?;
    Ok(FeatureMatrix {
        rows: DMatrix::from_column_slice(mains.len(), 1, &mains.watts),
        timestamps: mains.timestamps.clone(),
        feature_names: vec!["value".into()],
    })
}

/// Row for time `t` is `[y_{t-k}, ..., y_{t+k}]`; the first and last `k`
/// readings have no complete window and are dropped.
pub fn window_features(mains: &PowerSeries, cfg: WindowConfig) -> Result<FeatureMatrix> {
    let k = cfg.half_width_k;
    check_len(mains, cfg.len())?;
    let n = mains.len();
    let rows: Vec<Vec<f64>> = (k..n - k).map(|t| mains.watts[t - k..=t + k].to_vec()).collect();
    let names = (0..cfg.len())
        .map(|j| format!("y[t{:+}]", j as i64 - k as i64))
        .collect();
    Ok(FeatureMatrix::from_rows(rows, mains.timestamps[k..n - k].to_vec(), names))
}

/// [`window_features`] with the window range appended as a final column.
pub fn window_features_with_range(mains: &PowerSeries, cfg: WindowConfig) -> Result<FeatureMatrix> {
    let base = window_features(mains, cfg)?;
    let n = base.nrows();
    let d = base.ncols();
    let mut rows = base.rows.clone().resize_horizontally(d + 1, 0.0);
    for i in 0..n {
        let r = base.rows.row(i);
        rows[(i, d)] = r.max() - r.min();
    }
    let mut names = base.feature_names;
    names.push("range".into());
    Ok(FeatureMatrix {
        rows,
        timestamps: base.timestamps,
        feature_names: names,
    })
}

/// Population excess kurtosis `m4 / m2^2 - 3`; 0 for a constant window.
///
/// Moments are taken on offsets from the window minimum, so a constant shift
/// of integer-valued readings leaves the result bitwise unchanged.
pub fn excess_kurtosis(window: &[f64]) -> f64 {
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    let n = window.len() as f64;
    let mean = window.iter().map(|v| v - lo).sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in window {
        let d = (v - lo) - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return 0.0;
    }
    m4 / (m2 * m2) - 3.0
}

/// Seven window statistics per row: value, max, min, mean, excess kurtosis,
/// first difference and range (see [`STAT_FEATURES`]).
pub fn statistical_features(mains: &PowerSeries, cfg: WindowConfig) -> Result<FeatureMatrix> {
    let k = cfg.half_width_k;
    check_len(mains, cfg.len().max(2))?;
    let n = mains.len();
    let w = &mains.watts;
    let start = k.max(1);
    let mut rows = Vec::with_capacity(n - k - start);
    for t in start..n - k {
        let win = &w[t - k..=t + k];
        let max = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = win.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = (win.iter().sum::<f64>() / win.len() as f64).clamp(min, max);
        rows.push(vec![w[t], max, min, mean, excess_kurtosis(win), w[t] - w[t - 1], max - min]);
    }
    Ok(FeatureMatrix::from_rows(
        rows,
        mains.timestamps[start..n - k].to_vec(),
        STAT_FEATURES.iter().map(|s| s.to_string()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(w: &[f64]) -> PowerSeries {
        PowerSeries::new("mains", (0..w.len() as i64).map(|i| i * 60).collect(), w.to_vec()).unwrap()
    }

    #[test]
    fn point_examples() {
        let f = point_features(&series(&[10.0, 20.0, 30.0])).unwrap();
        assert_eq!(f.rows, DMatrix::from_column_slice(3, 1, &[10.0, 20.0, 30.0]));
        assert_eq!(f.timestamps, vec![0, 60, 120]);
        let f = point_features(&series(&[5.0])).unwrap();
        assert_eq!(f.rows[(0, 0)], 5.0);
        assert!(point_features(&series(&[])).is_err());
    }

    #[test]
    fn window_examples() {
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let f = window_features(&s, WindowConfig::new(1)).unwrap();
        assert_eq!(
            f.rows,
            DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 3.0, 4.0, 5.0])
        );
        assert_eq!(f.timestamps, vec![60, 120, 180]);
        let p = point_features(&s).unwrap();
        let w0 = window_features(&s, WindowConfig::new(0)).unwrap();
        assert_eq!(w0.rows, p.rows);
        assert_eq!(w0.timestamps, p.timestamps);
        let long = series(&vec![1.0; 200]);
        assert_eq!(window_features(&long, WindowConfig::default()).unwrap().nrows(), 102);
        assert!(window_features(&s, WindowConfig::new(3)).is_err());
    }

    #[test]
    fn window_with_range_appends_range() {
        let s = series(&[1.0, 7.0, 3.0, 4.0, 5.0]);
        let f = window_features_with_range(&s, WindowConfig::new(1)).unwrap();
        assert_eq!(f.ncols(), 4);
        assert_eq!(f.rows.column(3).as_slice(), &[6.0, 4.0, 2.0]);
        assert_eq!(f.feature_names.last().unwrap(), "range");
    }

    #[test]
    fn statistical_example_window() {
        let s = series(&[100.0, 0.0, 50.0, 0.0, 200.0]);
        let f = statistical_features(&s, WindowConfig::new(2)).unwrap();
        assert_eq!(f.nrows(), 1);
        let r: Vec<f64> = f.rows.row(0).iter().copied().collect();
        assert_eq!(r[0], 50.0);
        assert_eq!(r[1], 200.0);
        assert_eq!(r[2], 0.0);
        assert_relative_eq!(r[3], 70.0, epsilon = 1e-12);
        // m4 / m2^2 - 3 for [100, 0, 50, 0, 200], exact rational -97/112
        assert_relative_eq!(r[4], -0.866_071_428_571_428_6, max_relative = 1e-12);
        assert_eq!(r[5], 50.0);
        assert_eq!(r[6], 200.0);
        assert_eq!(f.feature_names, STAT_FEATURES.to_vec());
    }

    #[test]
    fn constant_window_has_zero_kurtosis() {
        assert_eq!(excess_kurtosis(&[5.0; 5]), 0.0);
        let f = statistical_features(&series(&[5.0; 6]), WindowConfig::new(2)).unwrap();
        assert!(f.rows.column(4).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_window_needs_a_predecessor() {
        let f = statistical_features(&series(&[1.0, 4.0, 9.0]), WindowConfig::new(0)).unwrap();
        assert_eq!(f.timestamps, vec![60, 120]);
        assert_eq!(f.rows.column(5).as_slice(), &[3.0, 5.0]);
    }

    #[test]
    fn align_drops_rows_without_targets() {
        let f = point_features(&series(&[1.0, 2.0, 3.0])).unwrap();
        let target = PowerSeries::new("fridge", vec![0, 120, 300], vec![7.0, 8.0, 9.0]).unwrap();
        let (g, y) = f.align(&target).unwrap();
        assert_eq!(g.timestamps, vec![0, 120]);
        assert_eq!(y, vec![7.0, 8.0]);
        assert_eq!(g.rows.column(0).as_slice(), &[1.0, 3.0]);
    }

    fn mains_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0u32..3000, 12..60).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn statistical_rows_are_ordered(w in mains_strategy(), k in 1usize..5) {
            let f = statistical_features(&series(&w), WindowConfig::new(k)).unwrap();
            for r in f.rows.row_iter() {
                let (value, max, min, mean, range) = (r[0], r[1], r[2], r[3], r[6]);
                prop_assert!(min <= mean && mean <= max);
                prop_assert!(min <= value && value <= max);
                prop_assert_eq!(range, max - min);
                prop_assert!(range >= 0.0);
            }
        }

        #[test]
        fn windows_are_exact_slices(w in mains_strategy(), k in 0usize..5) {
            let f = window_features(&series(&w), WindowConfig::new(k)).unwrap();
            for (i, r) in f.rows.row_iter().enumerate() {
                let slice: Vec<f64> = r.iter().copied().collect();
                prop_assert_eq!(&slice[..], &w[i..i + 2 * k + 1]);
            }
        }

        #[test]
        fn shift_moves_levels_only(w in mains_strategy(), k in 1usize..5, c in 0u32..500) {
            let c = f64::from(c);
            let s = series(&w);
            let shifted = crate::data::inject_bias(&s, c);
            let a = statistical_features(&s, WindowConfig::new(k)).unwrap();
            let b = statistical_features(&shifted, WindowConfig::new(k)).unwrap();
            for (ra, rb) in a.rows.row_iter().zip(b.rows.row_iter()) {
                for col in [4, 5, 6] {
                    prop_assert_eq!(ra[col].to_bits(), rb[col].to_bits());
                }
                for col in [0, 1, 2, 3] {
                    prop_assert!((rb[col] - ra[col] - c).abs() < 1e-9);
                }
            }
        }
    }
}
