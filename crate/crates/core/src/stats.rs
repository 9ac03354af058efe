//! Order statistics and fit measures shared by the estimators.
//!
//! Percentiles use linear interpolation between order statistics: for `n`
//! sorted values and `q` in `[0, 100]` the position is `h = (n - 1) q / 100`
//! and the result is `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.

use alloc::vec::Vec;

/// Percentile of already-sorted data. Returns `None` when `sorted` is empty.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 100.0);
    let h = (sorted.len() - 1) as f64 * q / 100.0;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Percentile of unsorted data (sorts a copy).
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    let sorted = sorted_copy(values);
    percentile_sorted(&sorted, q)
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 50.0)
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Coefficient of determination of `predicted` against `observed`.
///
/// With zero total variance the fit is 1 when residuals vanish and 0 otherwise.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> f64 {
    assert_eq!(observed.len(), predicted.len());
    let m = mean(observed).unwrap_or(0.0);
    let ss_tot: f64 = observed.iter().map(|o| (o - m) * (o - m)).sum();
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p) * (o - p))
        .sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// Median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let sorted = sorted_copy(values);
    Some(Summary {
        median: percentile_sorted(&sorted, 50.0)?,
        q25: percentile_sorted(&sorted, 25.0)?,
        q75: percentile_sorted(&sorted, 75.0)?,
    })
}
