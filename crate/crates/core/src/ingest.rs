//! Turning raw measurement streams into per-period feature matrices.
//!
//! The pipeline for one stay is
//! [`bin_and_aggregate`] -> [`cap_outliers`] -> [`carry_forward_impute`]
//! -> [`regression_impute`]. Capping bounds and fallback medians come from
//! [`FeaturePools`] built on the training split only.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{Lu, Matrix};
use crate::stats;

pub const DEFAULT_PERIOD_HOURS: f64 = 12.0;
pub const DEFAULT_IMPUTE_ROUNDS: usize = 10;
pub const LOWER_CAP_PERCENTILE: f64 = 0.1;
pub const UPPER_CAP_PERCENTILE: f64 = 99.9;

#[derive(Debug, Clone, PartialEq)]
pub enum IngestError {
    EmptyStream,
    SchemaMismatch { feature: String },
    InvalidTimestamp { timestamp: f64 },
    InvalidValue { feature: String },
    InvalidPeriod(f64),
    DimensionMismatch { expected: usize, found: usize },
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyStream => write!(f, "event stream is empty"),
            Self::SchemaMismatch { feature } => write!(f, "feature {feature:?} is not in the schema"),
            Self::InvalidTimestamp { timestamp } => {
                write!(f, "timestamp {timestamp} is negative or not finite")
            }
            Self::InvalidValue { feature } => write!(f, "non-finite value for feature {feature:?}"),
            Self::InvalidPeriod(p) => write!(f, "period length must be positive, got {p}"),
            Self::DimensionMismatch { expected, found } => {
                write!(f, "expected {expected} features, found {found}")
            }
        }
    }
}

/// How measurements falling in the same period are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AggregationMode {
    /// Vital signs and labs: average.
    Mean,
    /// Outputs and volumes: sum.
    Sum,
    /// Medications and treatments: sum, and zero when nothing was recorded.
    ZeroFill,
}

impl AggregationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MEAN" => Some(Self::Mean),
            "SUM" => Some(Self::Sum),
            "ZERO_FILL" | "ZEROFILL" => Some(Self::ZeroFill),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mean => "MEAN",
            Self::Sum => "SUM",
            Self::ZeroFill => "ZERO_FILL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub mode: AggregationMode,
}

/// Ordered feature list; column `j` of every matrix is `features[j]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Self {
        Self { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn mode(&self, j: usize) -> AggregationMode {
        self.features[j].mode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp_hours: f64,
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEventStream {
    pub stay_id: String,
    pub events: Vec<Event>,
}

impl RawEventStream {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<(), IngestError> {
        if self.events.is_empty() {
            return Err(IngestError::EmptyStream);
        }
        for e in &self.events {
            if !e.timestamp_hours.is_finite() || e.timestamp_hours < 0.0 {
                return Err(IngestError::InvalidTimestamp { timestamp: e.timestamp_hours });
            }
            if schema.index_of(&e.feature).is_none() {
                return Err(IngestError::SchemaMismatch { feature: e.feature.clone() });
            }
            if !e.value.is_finite() {
                return Err(IngestError::InvalidValue { feature: e.feature.clone() });
            }
        }
        Ok(())
    }

    /// Stay-level inclusion rule: keep the stay unless more than
    /// `max_missing_fraction` of its `MEAN` features were never measured.
    pub fn passes_inclusion(&self, schema: &FeatureSchema, max_missing_fraction: f64) -> bool {
        let mean_features: Vec<usize> = (0..schema.len())
            .filter(|&j| schema.mode(j) == AggregationMode::Mean)
            .collect();
        if mean_features.is_empty() {
            return true;
        }
        let mut seen = vec![false; schema.len()];
        for e in &self.events {
            if let Some(j) = schema.index_of(&e.feature) {
                seen[j] = true;
            }
        }
        let never = mean_features.iter().filter(|&&j| !seen[j]).count();
        (never as f64) <= max_missing_fraction * mean_features.len() as f64
    }
}

/// `T x F` values for one stay. Row `t` covers `[t p, (t + 1) p)` hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodFeatureMatrix {
    pub stay_id: String,
    pub period_length_hours: f64,
    pub values: Matrix,
    pub missing: Vec<bool>,
}

impl PeriodFeatureMatrix {
    pub fn n_periods(&self) -> usize {
        self.values.rows()
    }

    pub fn n_features(&self) -> usize {
        self.values.cols()
    }

    pub fn is_missing(&self, t: usize, j: usize) -> bool {
        self.missing[t * self.n_features() + j]
    }

    pub fn set(&mut self, t: usize, j: usize, value: f64) {
        let f = self.n_features();
        self.values[(t, j)] = value;
        self.missing[t * f + j] = false;
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }
}

/// Aggregates events into periods; the number of periods covers the last event.
pub fn bin_and_aggregate(
    stream: &RawEventStream,
    schema: &FeatureSchema,
    period_hours: f64,
) -> Result<PeriodFeatureMatrix, IngestError> {
    if !(period_hours > 0.0) || !period_hours.is_finite() {
        return Err(IngestError::InvalidPeriod(period_hours));
    }
    stream.validate(schema)?;
    let last = stream.events.iter().map(|e| e.timestamp_hours).fold(0.0, f64::max);
    let n_periods = libm::floor(last / period_hours) as usize + 1;
    bin_into(stream, schema, period_hours, n_periods)
}

/// Aggregates into exactly `n_periods` rows; events past the end are dropped.
///
/// Used when the stay length is known independently of the measurements
/// (e.g. trailing periods without any recorded event).
pub fn bin_and_aggregate_periods(
    stream: &RawEventStream,
    schema: &FeatureSchema,
    period_hours: f64,
    n_periods: usize,
) -> Result<PeriodFeatureMatrix, IngestError> {
    if !(period_hours > 0.0) || !period_hours.is_finite() {
        return Err(IngestError::InvalidPeriod(period_hours));
    }
    stream.validate(schema)?;
    bin_into(stream, schema, period_hours, n_periods)
}

fn bin_into(
    stream: &RawEventStream,
    schema: &FeatureSchema,
    period_hours: f64,
    n_periods: usize,
) -> Result<PeriodFeatureMatrix, IngestError> {
    let f = schema.len();
    let mut sums = vec![0.0; n_periods * f];
    let mut counts = vec![0u32; n_periods * f];
    // Sorting makes sums independent of input order.
    let mut events: Vec<(usize, usize, f64)> = Vec::with_capacity(stream.events.len());
    for e in &stream.events {
        let t = libm::floor(e.timestamp_hours / period_hours) as usize;
        if t >= n_periods {
            continue;
        }
        let j = schema
            .index_of(&e.feature)
            .ok_or_else(|| IngestError::SchemaMismatch { feature: e.feature.clone() })?;
        events.push((t, j, e.value));
    }
    events.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    for (t, j, v) in events {
        sums[t * f + j] += v;
        counts[t * f + j] += 1;
    }
    let mut values = Matrix::zeros(n_periods, f);
    let mut missing = vec![false; n_periods * f];
    for t in 0..n_periods {
        for j in 0..f {
            let k = t * f + j;
            let c = counts[k];
            match schema.mode(j) {
                AggregationMode::Mean if c > 0 => values[(t, j)] = sums[k] / c as f64,
                AggregationMode::Sum | AggregationMode::ZeroFill if c > 0 => values[(t, j)] = sums[k],
                AggregationMode::ZeroFill => values[(t, j)] = 0.0,
                _ => missing[k] = true,
            }
        }
    }
    Ok(PeriodFeatureMatrix {
        stay_id: stream.stay_id.clone(),
        period_length_hours: period_hours,
        values,
        missing,
    })
}

/// Last observation carried forward, per column. Leading gaps stay flagged.
pub fn carry_forward_impute(m: &PeriodFeatureMatrix) -> PeriodFeatureMatrix {
    let mut out = m.clone();
    for j in 0..m.n_features() {
        let mut last: Option<f64> = None;
        for t in 0..m.n_periods() {
            if m.is_missing(t, j) {
                if let Some(v) = last {
                    out.set(t, j, v);
                }
            } else {
                last = Some(m.values[(t, j)]);
            }
        }
    }
    out
}

/// Per-feature pools of observed (non-missing) aggregated values from a
/// training split. Read-only once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePools {
    sorted: Vec<Vec<f64>>,
}

impl FeaturePools {
    pub fn from_matrices<'a, I>(n_features: usize, matrices: I) -> Self
    where
        I: IntoIterator<Item = &'a PeriodFeatureMatrix>,
    {
        let mut pools = vec![Vec::new(); n_features];
        for m in matrices {
            assert_eq!(m.n_features(), n_features, "feature count");
            for t in 0..m.n_periods() {
                for (j, pool) in pools.iter_mut().enumerate() {
                    if !m.is_missing(t, j) {
                        pool.push(m.values[(t, j)]);
                    }
                }
            }
        }
        Self::from_columns(pools)
    }

    pub fn from_columns(mut columns: Vec<Vec<f64>>) -> Self {
        for c in &mut columns {
            c.retain(|v| v.is_finite());
            c.sort_by(f64::total_cmp);
        }
        Self { sorted: columns }
    }

    pub fn n_features(&self) -> usize {
        self.sorted.len()
    }

    pub fn observed(&self, j: usize) -> usize {
        self.sorted[j].len()
    }

    pub fn percentile(&self, j: usize, q: f64) -> Option<f64> {
        stats::percentile_sorted(&self.sorted[j], q)
    }

    /// `(p0.1, p99.9)`, or `None` with fewer than two observations.
    pub fn cap_bounds(&self, j: usize) -> Option<(f64, f64)> {
        if self.sorted[j].len() < 2 {
            return None;
        }
        Some((
            self.percentile(j, LOWER_CAP_PERCENTILE)?,
            self.percentile(j, UPPER_CAP_PERCENTILE)?,
        ))
    }

    /// Per-feature medians; features never observed fall back to 0.
    pub fn medians(&self) -> Vec<f64> {
        (0..self.n_features())
            .map(|j| self.percentile(j, 50.0).unwrap_or(0.0))
            .collect()
    }
}

/// Result of [`cap_outliers`]: the capped matrix plus the features that were
/// passed through because the pool was too small to define percentiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Capped {
    pub matrix: PeriodFeatureMatrix,
    pub uncapped_features: Vec<usize>,
}

pub fn cap_outliers(pools: &FeaturePools, m: &PeriodFeatureMatrix) -> Result<Capped, IngestError> {
    if pools.n_features() != m.n_features() {
        return Err(IngestError::DimensionMismatch {
            expected: pools.n_features(),
            found: m.n_features(),
        });
    }
    let mut out = m.clone();
    let mut uncapped_features = Vec::new();
    for j in 0..m.n_features() {
        let Some((lo, hi)) = pools.cap_bounds(j) else {
            uncapped_features.push(j);
            continue;
        };
        for t in 0..m.n_periods() {
            if !m.is_missing(t, j) {
                out.values[(t, j)] = m.values[(t, j)].clamp(lo, hi);
            }
        }
    }
    Ok(Capped { matrix: out, uncapped_features })
}

/// Round-robin regression imputer fitted on a set of stays.
///
/// Missing entries start at the fallback medians; then, for each round,
/// every feature with at least two observed rows is regressed (Bayesian
/// ridge) on all other features over the stacked rows, and its gaps are
/// replaced by the predictions. The fitted sequence of regressions is kept
/// so that other stays (e.g. a test split) are filled the same way.
#[derive(Debug, Clone)]
pub struct IterativeImputer {
    medians: Vec<f64>,
    /// `(feature, model)` in application order, all rounds concatenated.
    steps: Vec<(usize, BayesianRidge)>,
}

struct Stacked {
    values: Matrix,
    missing: Vec<bool>,
}

fn stack(matrices: &[&PeriodFeatureMatrix], f: usize) -> Result<Stacked, IngestError> {
    let n: usize = matrices.iter().map(|m| m.n_periods()).sum();
    let mut data = Vec::with_capacity(n * f);
    let mut missing = Vec::with_capacity(n * f);
    for m in matrices {
        if m.n_features() != f {
            return Err(IngestError::DimensionMismatch { expected: f, found: m.n_features() });
        }
        data.extend_from_slice(m.values.as_slice());
        missing.extend_from_slice(&m.missing);
    }
    Ok(Stacked { values: Matrix::from_vec(n, f, data), missing })
}

impl IterativeImputer {
    pub fn fit(matrices: &[&PeriodFeatureMatrix], rounds: usize, fallback_medians: &[f64]) -> Result<Self, IngestError> {
        let f = fallback_medians.len();
        let mut st = stack(matrices, f)?;
        let n = st.values.rows();
        fill_medians(&mut st, fallback_medians);
        let mut steps = Vec::new();
        let targets: Vec<usize> =
            (0..f).filter(|&j| (0..n).filter(|&t| !st.missing[t * f + j]).count() >= 2).collect();
        if n >= 2 && f >= 2 {
            for _ in 0..rounds {
                for &j in &targets {
                    let observed: Vec<usize> = (0..n).filter(|&t| !st.missing[t * f + j]).collect();
                    let mut x = Matrix::zeros(observed.len(), f - 1);
                    let mut y = Vec::with_capacity(observed.len());
                    for (r, &t) in observed.iter().enumerate() {
                        others(st.values.row(t), j, x.row_mut(r));
                        y.push(st.values[(t, j)]);
                    }
                    let model = BayesianRidge::fit(&x, &y);
                    apply(&mut st, j, &model);
                    steps.push((j, model));
                }
            }
        }
        Ok(Self { medians: fallback_medians.to_vec(), steps })
    }

    pub fn transform(&self, m: &PeriodFeatureMatrix) -> Result<PeriodFeatureMatrix, IngestError> {
        let f = self.medians.len();
        let mut st = stack(&[m], f)?;
        fill_medians(&mut st, &self.medians);
        if !m.is_complete() {
            for (j, model) in &self.steps {
                apply(&mut st, *j, model);
            }
        }
        Ok(PeriodFeatureMatrix {
            stay_id: m.stay_id.clone(),
            period_length_hours: m.period_length_hours,
            values: st.values,
            missing: vec![false; m.n_periods() * f],
        })
    }
}

fn fill_medians(st: &mut Stacked, medians: &[f64]) {
    let f = medians.len();
    for t in 0..st.values.rows() {
        for j in 0..f {
            if st.missing[t * f + j] {
                st.values[(t, j)] = medians[j];
            }
        }
    }
}

fn others(row: &[f64], skip: usize, out: &mut [f64]) {
    let mut c = 0;
    for (k, &v) in row.iter().enumerate() {
        if k != skip {
            out[c] = v;
            c += 1;
        }
    }
}

fn apply(st: &mut Stacked, j: usize, model: &BayesianRidge) {
    let f = st.values.cols();
    let mut buf = vec![0.0; f.saturating_sub(1)];
    for t in 0..st.values.rows() {
        if st.missing[t * f + j] {
            others(st.values.row(t), j, &mut buf);
            st.values[(t, j)] = model.predict(&buf);
        }
    }
}

/// Fills the gaps left after carry-forward using only the stay itself.
///
/// Columns without any observed row, and single-row matrices, keep the
/// median fill.
pub fn regression_impute(
    m: &PeriodFeatureMatrix,
    rounds: usize,
    fallback_medians: &[f64],
) -> Result<PeriodFeatureMatrix, IngestError> {
    if fallback_medians.len() != m.n_features() {
        return Err(IngestError::DimensionMismatch { expected: m.n_features(), found: fallback_medians.len() });
    }
    if m.is_complete() {
        return Ok(m.clone());
    }
    IterativeImputer::fit(&[m], rounds, fallback_medians)?.transform(m)
}

/// Per-stay pipeline after binning: cap, carry forward, regress within the
/// stay.
pub fn preprocess(
    binned: &PeriodFeatureMatrix,
    pools: &FeaturePools,
    rounds: usize,
) -> Result<(PeriodFeatureMatrix, Vec<usize>), IngestError> {
    let capped = cap_outliers(pools, binned)?;
    let carried = carry_forward_impute(&capped.matrix);
    let imputed = regression_impute(&carried, rounds, &pools.medians())?;
    Ok((imputed, capped.uncapped_features))
}

/// Dataset-level pipeline: capping pools and imputation regressions are
/// learned on a training set of binned stays and applied to any stay.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub pools: FeaturePools,
    imputer: IterativeImputer,
}

impl Preprocessor {
    pub fn fit(train: &[PeriodFeatureMatrix], n_features: usize, rounds: usize) -> Result<Self, IngestError> {
        let pools = FeaturePools::from_matrices(n_features, train.iter());
        let carried = train
            .iter()
            .map(|m| Ok(carry_forward_impute(&cap_outliers(&pools, m)?.matrix)))
            .collect::<Result<Vec<_>, IngestError>>()?;
        let refs: Vec<&PeriodFeatureMatrix> = carried.iter().collect();
        let imputer = IterativeImputer::fit(&refs, rounds, &pools.medians())?;
        Ok(Self { pools, imputer })
    }

    /// Capped, carried-forward and imputed copy of `binned`, plus the
    /// features left uncapped.
    pub fn transform(&self, binned: &PeriodFeatureMatrix) -> Result<(PeriodFeatureMatrix, Vec<usize>), IngestError> {
        let capped = cap_outliers(&self.pools, binned)?;
        let carried = carry_forward_impute(&capped.matrix);
        Ok((self.imputer.transform(&carried)?, capped.uncapped_features))
    }
}

/// Linear regression with Gaussian weight prior and noise precision chosen by
/// evidence maximization (Gamma(1e-6, 1e-6) hyperpriors on both precisions).
#[derive(Debug, Clone)]
pub struct BayesianRidge {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub noise_precision: f64,
    pub weight_precision: f64,
}

impl BayesianRidge {
    const MAX_ITER: usize = 300;
    const TOL: f64 = 1e-10;
    const HYPER: f64 = 1e-6;

    pub fn fit(x: &Matrix, y: &[f64]) -> Self {
        let (n, p) = (x.rows(), x.cols());
        assert_eq!(n, y.len());
        let x_mean: Vec<f64> = (0..p).map(|c| x.column(c).iter().sum::<f64>() / n as f64).collect();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let mut gram = Matrix::zeros(p, p);
        let mut xty = vec![0.0; p];
        let mut row = vec![0.0; p];
        for r in 0..n {
            for (c, v) in row.iter_mut().enumerate() {
                *v = x[(r, c)] - x_mean[c];
            }
            for a in 0..p {
                xty[a] += row[a] * yc[r];
                for b in 0..p {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        let yty: f64 = yc.iter().map(|v| v * v).sum();
        let var_y = yty / n as f64;
        let mut alpha = 1.0 / (var_y + f64::EPSILON);
        let mut lambda = 1.0;
        let mut coef = vec![0.0; p];
        for _ in 0..Self::MAX_ITER {
            // posterior mean solves (lambda I + alpha X'X) w = alpha X'y
            let mut a = Matrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    a[(i, j)] = alpha * gram[(i, j)];
                }
                a[(i, i)] += lambda;
            }
            let Ok(lu) = Lu::factor(&a) else { break };
            let rhs: Vec<f64> = xty.iter().map(|v| alpha * v).collect();
            let new_coef = lu.solve(&rhs);
            // gamma = p - lambda * trace(A^-1)
            let mut trace_inv = 0.0;
            let mut e = vec![0.0; p];
            for i in 0..p {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[i] = 1.0;
                trace_inv += lu.solve(&e)[i];
            }
            let gamma = p as f64 - lambda * trace_inv;
            // rss from the normal equations: y'y - 2 w'X'y + w'Gw
            let wg: f64 = (0..p)
                .map(|i| new_coef[i] * (0..p).map(|j| gram[(i, j)] * new_coef[j]).sum::<f64>())
                .sum();
            let wxy: f64 = new_coef.iter().zip(&xty).map(|(w, v)| w * v).sum();
            let rss = (yty - 2.0 * wxy + wg).max(0.0);
            let w2: f64 = new_coef.iter().map(|w| w * w).sum();
            lambda = (gamma + 2.0 * Self::HYPER) / (w2 + 2.0 * Self::HYPER);
            alpha = (n as f64 - gamma + 2.0 * Self::HYPER) / (rss + 2.0 * Self::HYPER);
            let change: f64 = coef.iter().zip(&new_coef).map(|(a, b)| libm::fabs(a - b)).sum();
            coef = new_coef;
            if change < Self::TOL {
                break;
            }
        }
        let intercept = y_mean - coef.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
        Self { coef, intercept, noise_precision: alpha, weight_precision: lambda }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureSpec { name: "hr".into(), mode: AggregationMode::Mean },
            FeatureSpec { name: "urine".into(), mode: AggregationMode::Sum },
            FeatureSpec { name: "vaso".into(), mode: AggregationMode::ZeroFill },
        ])
    }

    fn ev(t: f64, f: &str, v: f64) -> Event {
        Event { timestamp_hours: t, feature: f.to_string(), value: v }
    }

    fn column(m: &PeriodFeatureMatrix, j: usize) -> Vec<Option<f64>> {
        (0..m.n_periods())
            .map(|t| (!m.is_missing(t, j)).then(|| m.values[(t, j)]))
            .collect()
    }

    fn single_column(values: &[Option<f64>]) -> PeriodFeatureMatrix {
        PeriodFeatureMatrix {
            stay_id: "s".into(),
            period_length_hours: 12.0,
            values: Matrix::from_vec(values.len(), 1, values.iter().map(|v| v.unwrap_or(0.0)).collect()),
            missing: values.iter().map(Option::is_none).collect(),
        }
    }

    #[test]
    fn mean_sum_and_zero_fill() {
        let stream = RawEventStream {
            stay_id: "a".into(),
            events: vec![
                ev(1.0, "hr", 80.0),
                ev(5.0, "hr", 90.0),
                ev(2.0, "urine", 100.0),
                ev(3.0, "urine", 50.0),
                ev(30.0, "hr", 70.0),
            ],
        };
        let m = bin_and_aggregate(&stream, &schema(), 12.0).unwrap();
        assert_eq!(m.n_periods(), 3);
        assert_eq!(column(&m, 0), vec![Some(85.0), None, Some(70.0)]);
        assert_eq!(column(&m, 1), vec![Some(150.0), None, None]);
        assert_eq!(column(&m, 2), vec![Some(0.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn bin_errors() {
        let empty = RawEventStream { stay_id: "a".into(), events: vec![] };
        assert_eq!(bin_and_aggregate(&empty, &schema(), 12.0), Err(IngestError::EmptyStream));
        let unknown = RawEventStream { stay_id: "a".into(), events: vec![ev(0.0, "spo2", 1.0)] };
        assert!(matches!(
            bin_and_aggregate(&unknown, &schema(), 12.0),
            Err(IngestError::SchemaMismatch { .. })
        ));
        let neg = RawEventStream { stay_id: "a".into(), events: vec![ev(-1.0, "hr", 1.0)] };
        assert!(matches!(
            bin_and_aggregate(&neg, &schema(), 12.0),
            Err(IngestError::InvalidTimestamp { .. })
        ));
        let ok = RawEventStream { stay_id: "a".into(), events: vec![ev(0.0, "hr", 1.0)] };
        assert!(matches!(bin_and_aggregate(&ok, &schema(), 0.0), Err(IngestError::InvalidPeriod(_))));
    }

    #[test]
    fn fixed_period_count_pads_and_truncates() {
        let s = RawEventStream { stay_id: "a".into(), events: vec![ev(1.0, "hr", 1.0), ev(40.0, "hr", 2.0)] };
        let m = bin_and_aggregate_periods(&s, &schema(), 12.0, 2).unwrap();
        assert_eq!(m.n_periods(), 2);
        assert_eq!(column(&m, 0), vec![Some(1.0), None]);
    }

    #[test]
    fn locf_examples() {
        let m = carry_forward_impute(&single_column(&[Some(5.0), None, None]));
        assert_eq!(column(&m, 0), vec![Some(5.0); 3]);
        let m = carry_forward_impute(&single_column(&[None, Some(7.0), None]));
        assert_eq!(column(&m, 0), vec![None, Some(7.0), Some(7.0)]);
        let m = carry_forward_impute(&single_column(&[None, None]));
        assert_eq!(m.missing_count(), 2);
    }

    #[test]
    fn inclusion_filter_counts_mean_features() {
        let s = schema();
        let with_hr = RawEventStream { stay_id: "a".into(), events: vec![ev(0.0, "hr", 1.0)] };
        assert!(with_hr.passes_inclusion(&s, 0.5));
        let without = RawEventStream { stay_id: "a".into(), events: vec![ev(0.0, "vaso", 1.0)] };
        assert!(!without.passes_inclusion(&s, 0.5));
    }

    fn pool_0_999() -> FeaturePools {
        FeaturePools::from_columns(vec![(0..1000).map(f64::from).collect()])
    }

    #[test]
    fn caps_against_brute_force_percentiles() {
        // brute force: sorted 0..999, h = 999 q / 100
        let sorted: Vec<f64> = (0..1000).map(f64::from).collect();
        let brute = |q: f64| {
            let h = 999.0 * q / 100.0;
            let lo = h as usize;
            sorted[lo] + (h - lo as f64) * (sorted[(lo + 1).min(999)] - sorted[lo])
        };
        let hi = brute(99.9);
        let lo = brute(0.1);
        assert!((hi - 998.001).abs() < 1e-9);
        assert!((lo - 0.999).abs() < 1e-9);
        let pools = pool_0_999();
        let m = single_column(&[Some(2000.0), Some(499.5), Some(0.5), None]);
        let capped = cap_outliers(&pools, &m).unwrap();
        assert_eq!(column(&capped.matrix, 0), vec![Some(hi), Some(499.5), Some(lo), None]);
        assert!(capped.uncapped_features.is_empty());
    }

    #[test]
    fn small_pool_passes_through() {
        let pools = FeaturePools::from_columns(vec![vec![1.0]]);
        let m = single_column(&[Some(100.0)]);
        let capped = cap_outliers(&pools, &m).unwrap();
        assert_eq!(capped.matrix, m);
        assert_eq!(capped.uncapped_features, vec![0]);
    }

    #[test]
    fn regression_identity_on_complete() {
        let m = single_column(&[Some(1.0), Some(2.0)]);
        assert_eq!(regression_impute(&m, 10, &[0.0]).unwrap(), m);
    }

    #[test]
    fn regression_recovers_exact_linear_relation() {
        // y = 2x on observed rows, y missing at x = 4.5
        let xs = [1.0, 2.0, 3.0, 4.5, 5.0, 6.0, 7.0];
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            values.push(x);
            values.push(if i == 3 { 0.0 } else { 2.0 * x });
            missing.push(false);
            missing.push(i == 3);
        }
        let m = PeriodFeatureMatrix {
            stay_id: "s".into(),
            period_length_hours: 12.0,
            values: Matrix::from_vec(xs.len(), 2, values),
            missing,
        };
        let out = regression_impute(&m, 10, &[0.0, 0.0]).unwrap();
        assert!(out.is_complete());
        assert!((out.values[(3, 1)] - 9.0).abs() < 1e-6, "{}", out.values[(3, 1)]);
    }

    #[test]
    fn all_missing_column_gets_training_median() {
        let m = PeriodFeatureMatrix {
            stay_id: "s".into(),
            period_length_hours: 12.0,
            values: Matrix::from_vec(3, 2, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]),
            missing: vec![false, true, false, true, false, true],
        };
        let out = regression_impute(&m, 10, &[0.0, 42.0]).unwrap();
        assert_eq!(out.values.column(1), vec![42.0; 3]);
        assert!(out.is_complete());
    }

    #[test]
    fn single_row_uses_medians() {
        let m = PeriodFeatureMatrix {
            stay_id: "s".into(),
            period_length_hours: 12.0,
            values: Matrix::from_vec(1, 2, vec![1.0, 0.0]),
            missing: vec![false, true],
        };
        let out = regression_impute(&m, 10, &[0.0, 7.0]).unwrap();
        assert_eq!(out.values.row(0), &[1.0, 7.0]);
    }
}
