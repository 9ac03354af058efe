//! Health states as k-means clusters of min-max scaled period features.
//!
//! Lloyd's algorithm from k-means++ seeding, best of several restarts. Each
//! restart draws from its own stream of the configured seed, so a fit is a
//! pure function of `(data, config)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{squared_distance, Matrix};
use crate::rng::{self, SimRng};
use crate::StateId;

pub const DEFAULT_STATES: usize = 400;
pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterError {
    TooFewPoints { k: usize, n: usize },
    TooFewClusters(usize),
    EmptyData,
    NonFinite,
    DimensionMismatch { expected: usize, found: usize },
}

impl fmt::Display for ClusterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewPoints { k, n } => write!(f, "cannot fit {k} clusters to {n} points"),
            Self::TooFewClusters(k) => write!(f, "need at least one cluster, got {k}"),
            Self::EmptyData => write!(f, "no data points"),
            Self::NonFinite => write!(f, "data contains non-finite values"),
            Self::DimensionMismatch { expected, found } => {
                write!(f, "expected {expected} features, found {found}")
            }
        }
    }
}

/// Per-feature min-max scaling to `[0, 1]`; constant features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(data: &Matrix) -> Result<Self, ClusterError> {
        if data.rows() == 0 {
            return Err(ClusterError::EmptyData);
        }
        if data.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::NonFinite);
        }
        let mut mins = data.row(0).to_vec();
        let mut maxs = mins.clone();
        for row in data.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn n_features(&self) -> usize {
        self.mins.len()
    }

    pub fn transform_point(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = self.maxs[j] - self.mins[j];
                if range > 0.0 {
                    (v - self.mins[j]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transform(&self, data: &Matrix) -> Matrix {
        let mut out = Vec::with_capacity(data.rows() * data.cols());
        for row in data.iter_rows() {
            out.extend(self.transform_point(row));
        }
        Matrix::from_vec(data.rows(), data.cols(), out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, restarts: DEFAULT_RESTARTS, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Outcome of a k-means fit on already-scaled data.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after every Lloyd iteration of the selected restart.
    pub wcss_history: Vec<f64>,
    /// WCSS histories of every restart, in restart order.
    pub restart_histories: Vec<Vec<f64>>,
}

/// Best-of-restarts Lloyd's algorithm.
pub fn kmeans_fit(data: &Matrix, config: &KMeansConfig) -> Result<KMeansFit, ClusterError> {
    let n = data.rows();
    if config.k == 0 {
        return Err(ClusterError::TooFewClusters(0));
    }
    if n == 0 {
        return Err(ClusterError::EmptyData);
    }
    if config.k > n {
        return Err(ClusterError::TooFewPoints { k: config.k, n });
    }
    if data.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    let mut best: Option<KMeansFit> = None;
    let mut histories = Vec::new();
    for r in 0..config.restarts.max(1) {
        let mut rng = rng::stream(config.seed, r as u64);
        let init = kmeans_plus_plus(data, config.k, &mut rng);
        let fit = lloyd(data, init, config.max_iter);
        histories.push(fit.wcss_history.clone());
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    let mut best = best.expect("at least one restart");
    best.restart_histories = histories;
    Ok(best)
}

fn kmeans_plus_plus(data: &Matrix, k: usize, rng: &mut SimRng) -> Matrix {
    let n = data.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng::uniform_index(rng, n));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(data.row(i), data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            rng::sample_weighted(rng, &d2)
        } else {
            // every point coincides with a chosen centroid
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), data.row(next)));
        }
    }
    let mut centroids = Matrix::zeros(k, data.cols());
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(data.row(i));
    }
    centroids
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(centroids: &Matrix, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.iter_rows().enumerate() {
        let d = squared_distance(row, point);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn wcss(data: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    data.iter_rows()
        .zip(labels)
        .map(|(row, &c)| squared_distance(row, centroids.row(c)))
        .sum()
}

/// Lloyd iterations from the given centroids until assignments stop changing.
pub fn lloyd(data: &Matrix, mut centroids: Matrix, max_iter: usize) -> KMeansFit {
    let (n, f, k) = (data.rows(), data.cols(), centroids.rows());
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let (c, _) = nearest(&centroids, data.row(i));
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed && iterations > 1 {
            break;
        }
        let mut sums = Matrix::zeros(k, f);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        repair_empty(data, &mut centroids, &mut labels, &mut counts);
        history.push(wcss(data, &centroids, &labels));
    }
    let total = wcss(data, &centroids, &labels);
    KMeansFit {
        centroids,
        labels,
        wcss: total,
        iterations,
        wcss_history: history,
        restart_histories: Vec::new(),
    }
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(data: &Matrix, centroids: &mut Matrix, labels: &mut [usize], counts: &mut [usize]) {
    for c in 0..counts.len() {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..data.rows())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, squared_distance(data.row(i), centroids.row(labels[i]))))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        let Some((i, _)) = far else { continue };
        let old = labels[i];
        // drop the point from its old cluster mean
        let m = counts[old] as f64;
        let point = data.row(i).to_vec();
        for (dst, v) in centroids.row_mut(old).iter_mut().zip(&point) {
            *dst = (*dst * m - v) / (m - 1.0);
        }
        counts[old] -= 1;
        centroids.row_mut(c).copy_from_slice(&point);
        labels[i] = c;
        counts[c] = 1;
    }
}

/// Fitted scaler plus centroids: the learned health-state map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModel {
    pub scaler: MinMaxScaler,
    pub centroids: Matrix,
    pub n_states: usize,
    pub seed: u64,
    pub wcss: f64,
}

impl StateModel {
    /// Fits the scaler on raw `data`, then k-means on the scaled data.
    pub fn fit(data: &Matrix, config: &KMeansConfig) -> Result<(Self, KMeansFit), ClusterError> {
        let scaler = MinMaxScaler::fit(data)?;
        let scaled = scaler.transform(data);
        let fit = kmeans_fit(&scaled, config)?;
        let model = Self {
            scaler,
            centroids: fit.centroids.clone(),
            n_states: config.k,
            seed: config.seed,
            wcss: fit.wcss,
        };
        Ok((model, fit))
    }

    pub fn n_features(&self) -> usize {
        self.centroids.cols()
    }

    /// Nearest centroid of an already-scaled point.
    pub fn assign(&self, scaled_point: &[f64]) -> StateId {
        StateId::from_index(nearest(&self.centroids, scaled_point).0)
    }

    /// Scales a raw point and assigns it.
    pub fn assign_raw(&self, raw_point: &[f64]) -> Result<StateId, ClusterError> {
        if raw_point.len() != self.n_features() {
            return Err(ClusterError::DimensionMismatch {
                expected: self.n_features(),
                found: raw_point.len(),
            });
        }
        if raw_point.iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::NonFinite);
        }
        Ok(self.assign(&self.scaler.transform_point(raw_point)))
    }
}

/// `(k, WCSS)` for each requested `k`, forced weakly decreasing in `k`.
///
/// When a larger `k` fits worse than the previous one, it is refitted from the
/// previous centroids plus the points farthest from them, which can only
/// lower the objective.
pub fn wcss_curve(
    data: &Matrix,
    k_values: &[usize],
    seed: u64,
    restarts: usize,
) -> Result<Vec<(usize, f64)>, ClusterError> {
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(ks.len());
    let mut prev: Option<KMeansFit> = None;
    for &k in &ks {
        let config = KMeansConfig { k, seed, restarts, max_iter: DEFAULT_MAX_ITER };
        let mut fit = kmeans_fit(data, &config)?;
        if let Some(p) = &prev {
            if fit.wcss > p.wcss {
                let warm = lloyd(data, grow_centroids(data, p, k), DEFAULT_MAX_ITER);
                if warm.wcss < fit.wcss {
                    fit = warm;
                }
            }
        }
        out.push((k, fit.wcss));
        prev = Some(fit);
    }
    Ok(out)
}

fn grow_centroids(data: &Matrix, prev: &KMeansFit, k: usize) -> Matrix {
    let f = data.cols();
    let mut rows: Vec<Vec<f64>> = prev.centroids.iter_rows().map(<[f64]>::to_vec).collect();
    let mut d2: Vec<f64> = data
        .iter_rows()
        .map(|r| rows.iter().map(|c| squared_distance(r, c)).fold(f64::INFINITY, f64::min))
        .collect();
    while rows.len() < k {
        let (i, _) = d2
            .iter()
            .enumerate()
            .fold((0, -1.0), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
        let c = data.row(i).to_vec();
        for (j, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(j), &c));
        }
        rows.push(c);
    }
    let mut m = Matrix::zeros(k, f);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    m
}
