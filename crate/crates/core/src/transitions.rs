//! Empirical MDP dynamics from labeled state trajectories.
//!
//! A trajectory `x_0 .. x_{L-1}` records the clinician keeping the patient
//! at every step but the last; what happens after `x_{L-1}` is given by its
//! terminal event. Keep transitions are the consecutive pairs; discharge
//! outcomes and in-hospital deaths are attributed to the last state.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::{self, SimRng};
use crate::stats;
use crate::StateId;

pub const DEFAULT_WINDOW_DAYS: u32 = 30;
/// Pseudo-count added to the UD numerator (and twice to the denominator).
pub const OUTCOME_SMOOTHING: f64 = 0.5;
const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionError {
    EmptyTrajectory { stay_id: String },
    StateOutOfRange { state: u32, n_states: usize },
    EmptyTest,
    TooFewSimulations(usize),
    InvalidModel(&'static str),
}

impl fmt::Display for TransitionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyTrajectory { stay_id } => write!(f, "trajectory {stay_id:?} has no states"),
            Self::StateOutOfRange { state, n_states } => {
                write!(f, "state {state} outside 1..={n_states}")
            }
            Self::EmptyTest => write!(f, "test set contains no transitions"),
            Self::TooFewSimulations(n) => write!(f, "need at least 100 simulations, got {n}"),
            Self::InvalidModel(why) => write!(f, "invalid transition model: {why}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminalEvent {
    DischargedSd,
    DischargedUd,
    InHospitalDeath,
    Censored,
}

impl TerminalEvent {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DISCHARGED_SD" | "SD" => Some(Self::DischargedSd),
            "DISCHARGED_UD" | "UD" => Some(Self::DischargedUd),
            "IN_HOSPITAL_DEATH" | "IHD" => Some(Self::InHospitalDeath),
            "CENSORED" => Some(Self::Censored),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DischargedSd => "DISCHARGED_SD",
            Self::DischargedUd => "DISCHARGED_UD",
            Self::InHospitalDeath => "IN_HOSPITAL_DEATH",
            Self::Censored => "CENSORED",
        }
    }

    pub fn is_discharge(self) -> bool {
        matches!(self, Self::DischargedSd | Self::DischargedUd)
    }

    /// Unsuccessful discharge: readmission or death within the window.
    pub fn is_unsuccessful(self) -> bool {
        self == Self::DischargedUd
    }

    /// Labels a discharge from post-discharge follow-up. `None` means no
    /// event happened.
    pub fn from_follow_up(readmitted_after_days: Option<f64>, died_after_days: Option<f64>, window_days: u32) -> Self {
        let within = |d: Option<f64>| d.is_some_and(|d| d <= window_days as f64);
        if within(readmitted_after_days) || within(died_after_days) {
            Self::DischargedUd
        } else {
            Self::DischargedSd
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrajectory {
    pub stay_id: String,
    pub states: Vec<StateId>,
    pub terminal_event: TerminalEvent,
    #[serde(default = "default_window")]
    pub window_days: u32,
}

fn default_window() -> u32 {
    DEFAULT_WINDOW_DAYS
}

impl LabeledTrajectory {
    pub fn new(stay_id: impl Into<String>, states: Vec<StateId>, terminal_event: TerminalEvent) -> Self {
        Self { stay_id: stay_id.into(), states, terminal_event, window_days: DEFAULT_WINDOW_DAYS }
    }

    /// Convenience constructor from 1-based state numbers.
    pub fn from_ids(stay_id: impl Into<String>, ids: &[u32], terminal_event: TerminalEvent) -> Self {
        let states = ids.iter().map(|&i| StateId::new(i).expect("state ids start at 1")).collect();
        Self::new(stay_id, states, terminal_event)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> Option<StateId> {
        self.states.last().copied()
    }

    pub fn validate(&self, n_states: usize) -> Result<(), TransitionError> {
        if self.states.is_empty() {
            return Err(TransitionError::EmptyTrajectory { stay_id: self.stay_id.clone() });
        }
        for s in &self.states {
            if s.index() >= n_states {
                return Err(TransitionError::StateOutOfRange { state: s.get(), n_states });
            }
        }
        Ok(())
    }
}

/// Raw count tables. Accumulation is additive, so partial counts from
/// disjoint trajectory sets can be merged in any order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub n_states: usize,
    /// Row-major `H x H` keep-transition counts.
    pub keep: Vec<u64>,
    pub discharged_sd: Vec<u64>,
    pub discharged_ud: Vec<u64>,
    pub in_hospital_death: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(n_states: usize) -> Self {
        Self {
            n_states,
            keep: vec![0; n_states * n_states],
            discharged_sd: vec![0; n_states],
            discharged_ud: vec![0; n_states],
            in_hospital_death: vec![0; n_states],
        }
    }

    pub fn from_trajectories(n_states: usize, trajectories: &[LabeledTrajectory]) -> Result<Self, TransitionError> {
        let mut c = Self::new(n_states);
        for t in trajectories {
            c.add(t)?;
        }
        Ok(c)
    }

    pub fn add(&mut self, t: &LabeledTrajectory) -> Result<(), TransitionError> {
        t.validate(self.n_states)?;
        let h = self.n_states;
        for w in t.states.windows(2) {
            self.keep[w[0].index() * h + w[1].index()] += 1;
        }
        let last = t.states[t.states.len() - 1].index();
        match t.terminal_event {
            TerminalEvent::DischargedSd => self.discharged_sd[last] += 1,
            TerminalEvent::DischargedUd => self.discharged_ud[last] += 1,
            TerminalEvent::InHospitalDeath => self.in_hospital_death[last] += 1,
            TerminalEvent::Censored => {}
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.n_states, other.n_states);
        for (a, b) in self.keep.iter_mut().zip(&other.keep) {
            *a += b;
        }
        for (a, b) in self.discharged_sd.iter_mut().zip(&other.discharged_sd) {
            *a += b;
        }
        for (a, b) in self.discharged_ud.iter_mut().zip(&other.discharged_ud) {
            *a += b;
        }
        for (a, b) in self.in_hospital_death.iter_mut().zip(&other.in_hospital_death) {
            *a += b;
        }
    }

    pub fn keep_exposure(&self, x: usize) -> u64 {
        self.keep[x * self.n_states..(x + 1) * self.n_states].iter().sum()
    }

    pub fn total_keep(&self) -> u64 {
        self.keep.iter().sum()
    }

    pub fn discharges(&self, x: usize) -> u64 {
        self.discharged_sd[x] + self.discharged_ud[x]
    }

    /// UD events for `x` counting in-hospital deaths.
    pub fn unsuccessful(&self, x: usize) -> u64 {
        self.discharged_ud[x] + self.in_hospital_death[x]
    }

    /// Denominator of the UD estimate: discharges plus in-hospital deaths.
    pub fn outcome_exposure(&self, x: usize) -> u64 {
        self.discharges(x) + self.in_hospital_death[x]
    }
}

/// `P(x'|x,K)` as a row-stochastic `H x H` matrix, rows without any keep
/// observation replaced by a self-loop.
pub fn keep_matrix_from_counts(counts: &TransitionCounts) -> Matrix {
    let h = counts.n_states;
    let mut m = Matrix::zeros(h, h);
    for x in 0..h {
        let total = counts.keep_exposure(x);
        if total == 0 {
            m[(x, x)] = 1.0;
            continue;
        }
        for y in 0..h {
            m[(x, y)] = counts.keep[x * h + y] as f64 / total as f64;
        }
    }
    m
}

pub fn estimate_keep_matrix(n_states: usize, trajectories: &[LabeledTrajectory]) -> Result<Matrix, TransitionError> {
    Ok(keep_matrix_from_counts(&TransitionCounts::from_trajectories(n_states, trajectories)?))
}

/// Unsmoothed `(ud + ihd) / (discharges + ihd)`; `None` without exposure.
pub fn raw_p_ud(counts: &TransitionCounts, x: usize) -> Option<f64> {
    let n = counts.outcome_exposure(x);
    (n > 0).then(|| counts.unsuccessful(x) as f64 / n as f64)
}

/// Smoothed `P(UD|x,D)` per state; states never discharged nor dead get the
/// smoothed pooled rate.
pub fn p_ud_from_counts(counts: &TransitionCounts) -> Vec<f64> {
    let h = counts.n_states;
    let pooled_num: u64 = (0..h).map(|x| counts.unsuccessful(x)).sum();
    let pooled_den: u64 = (0..h).map(|x| counts.outcome_exposure(x)).sum();
    let prior = (pooled_num as f64 + OUTCOME_SMOOTHING) / (pooled_den as f64 + 2.0 * OUTCOME_SMOOTHING);
    (0..h)
        .map(|x| {
            let den = counts.outcome_exposure(x);
            if den == 0 {
                prior
            } else {
                (counts.unsuccessful(x) as f64 + OUTCOME_SMOOTHING) / (den as f64 + 2.0 * OUTCOME_SMOOTHING)
            }
        })
        .collect()
}

/// `(p_UD, p_SD)` with `p_SD = 1 - p_UD`.
pub fn estimate_discharge_outcomes(
    n_states: usize,
    trajectories: &[LabeledTrajectory],
) -> Result<(Vec<f64>, Vec<f64>), TransitionError> {
    let counts = TransitionCounts::from_trajectories(n_states, trajectories)?;
    let p_ud = p_ud_from_counts(&counts);
    let p_sd = p_ud.iter().map(|p| 1.0 - p).collect();
    Ok((p_ud, p_sd))
}

/// Estimated (or given) discharge-MDP dynamics over `H` health states.
///
/// Keeping never leads to SD/UD and discharging always does, so only the
/// keep matrix and the discharge-outcome split are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub n_states: usize,
    pub keep_matrix: Matrix,
    pub p_ud: Vec<f64>,
    pub p_sd: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<TransitionCounts>,
}

impl TransitionModel {
    /// Builds a model from explicit probabilities, checking stochasticity.
    pub fn new(keep_matrix: Matrix, p_ud: Vec<f64>) -> Result<Self, TransitionError> {
        let p_sd = p_ud.iter().map(|p| 1.0 - p).collect();
        let m = Self { n_states: p_ud.len(), keep_matrix, p_ud, p_sd, counts: None };
        m.validate()?;
        Ok(m)
    }

    pub fn from_counts(counts: TransitionCounts) -> Self {
        let keep_matrix = keep_matrix_from_counts(&counts);
        let p_ud = p_ud_from_counts(&counts);
        let p_sd = p_ud.iter().map(|p| 1.0 - p).collect();
        Self { n_states: counts.n_states, keep_matrix, p_ud, p_sd, counts: Some(counts) }
    }

    pub fn estimate(n_states: usize, trajectories: &[LabeledTrajectory]) -> Result<Self, TransitionError> {
        Ok(Self::from_counts(TransitionCounts::from_trajectories(n_states, trajectories)?))
    }

    pub fn validate(&self) -> Result<(), TransitionError> {
        let h = self.n_states;
        if h == 0 {
            return Err(TransitionError::InvalidModel("no states"));
        }
        if self.keep_matrix.rows() != h || self.keep_matrix.cols() != h {
            return Err(TransitionError::InvalidModel("keep matrix shape"));
        }
        if self.p_ud.len() != h || self.p_sd.len() != h {
            return Err(TransitionError::InvalidModel("outcome vector length"));
        }
        for row in self.keep_matrix.iter_rows() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(TransitionError::InvalidModel("keep probability outside [0,1]"));
            }
            if libm::fabs(row.iter().sum::<f64>() - 1.0) > ROW_SUM_TOLERANCE * h as f64 {
                return Err(TransitionError::InvalidModel("keep row does not sum to 1"));
            }
        }
        for (u, s) in self.p_ud.iter().zip(&self.p_sd) {
            if !(0.0..=1.0).contains(u) || !(0.0..=1.0).contains(s) || libm::fabs(u + s - 1.0) > 1e-15 {
                return Err(TransitionError::InvalidModel("discharge outcome probabilities"));
            }
        }
        Ok(())
    }

    pub fn keep_row(&self, x: usize) -> &[f64] {
        self.keep_matrix.row(x)
    }

    pub fn sampler(&self) -> KeepSampler {
        KeepSampler::new(&self.keep_matrix)
    }
}

/// Cumulative keep rows for fast next-state draws.
#[derive(Debug, Clone)]
pub struct KeepSampler {
    n: usize,
    cumulative: Vec<f64>,
}

impl KeepSampler {
    pub fn new(keep: &Matrix) -> Self {
        let n = keep.rows();
        let mut cumulative = Vec::with_capacity(n * n);
        for row in keep.iter_rows() {
            let mut acc = 0.0;
            for p in row {
                acc += p;
                cumulative.push(acc);
            }
        }
        Self { n, cumulative }
    }

    pub fn next(&self, x: usize, rng: &mut SimRng) -> usize {
        rng::sample_cumulative(rng, &self.cumulative[x * self.n..(x + 1) * self.n])
    }
}

/// Goodness of fit of a model's predicted transition counts on held-out data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2Triple {
    pub keep: f64,
    pub sd: f64,
    pub ud: f64,
}

/// Expected counts (model probability x observed exposure in `test`) against
/// observed counts, over all keep cells and per-state SD/UD cells.
pub fn validate_r2(model: &TransitionModel, test: &[LabeledTrajectory]) -> Result<R2Triple, TransitionError> {
    let h = model.n_states;
    let counts = TransitionCounts::from_trajectories(h, test)?;
    let outcome_total: u64 = (0..h).map(|x| counts.outcome_exposure(x)).sum();
    if counts.total_keep() == 0 && outcome_total == 0 {
        return Err(TransitionError::EmptyTest);
    }
    let mut obs = Vec::with_capacity(h * h);
    let mut exp = Vec::with_capacity(h * h);
    for x in 0..h {
        let n = counts.keep_exposure(x) as f64;
        for y in 0..h {
            obs.push(counts.keep[x * h + y] as f64);
            exp.push(model.keep_matrix[(x, y)] * n);
        }
    }
    let keep = stats::r_squared(&obs, &exp);
    let mut sd_obs = Vec::with_capacity(h);
    let mut sd_exp = Vec::with_capacity(h);
    let mut ud_obs = Vec::with_capacity(h);
    let mut ud_exp = Vec::with_capacity(h);
    for x in 0..h {
        let n = counts.outcome_exposure(x) as f64;
        sd_obs.push(counts.discharged_sd[x] as f64);
        sd_exp.push(model.p_sd[x] * n);
        ud_obs.push(counts.unsuccessful(x) as f64);
        ud_exp.push(model.p_ud[x] * n);
    }
    Ok(R2Triple {
        keep,
        sd: stats::r_squared(&sd_obs, &sd_exp),
        ud: stats::r_squared(&ud_obs, &ud_exp),
    })
}

/// Exponential fit `gamma * exp(-lambda * s)` to a sojourn-time histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SojournFit {
    /// `P(x|x,K) = 1`: the chain never leaves.
    Absorbing,
    /// Every simulated sojourn lasted one period; no decay to fit.
    SinglePeriod,
    Fitted {
        gamma: f64,
        lambda: f64,
        r2: f64,
        mean_sojourn: f64,
        /// Fraction of simulations with sojourn `s`, for `s = 1..=len`.
        histogram: Vec<f64>,
    },
}

impl SojournFit {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Self::Fitted { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub fn r2(&self) -> Option<f64> {
        match self {
            Self::Fitted { r2, .. } => Some(*r2),
            _ => None,
        }
    }
}

const MAX_SOJOURN: usize = 10_000_000;

/// Simulates first-exit times from `state` under the keep dynamics and fits
/// an exponential decay to their histogram.
pub fn sojourn_exponential_check(
    model: &TransitionModel,
    state: StateId,
    n_sims: usize,
    seed: u64,
) -> Result<SojournFit, TransitionError> {
    if n_sims < 100 {
        return Err(TransitionError::TooFewSimulations(n_sims));
    }
    let x = state.index();
    if x >= model.n_states {
        return Err(TransitionError::StateOutOfRange { state: state.get(), n_states: model.n_states });
    }
    if model.keep_matrix[(x, x)] >= 1.0 {
        return Ok(SojournFit::Absorbing);
    }
    let sampler = model.sampler();
    let mut rng = rng::stream(seed, x as u64);
    let mut lengths = Vec::with_capacity(n_sims);
    for _ in 0..n_sims {
        let mut s = 1usize;
        while sampler.next(x, &mut rng) == x && s < MAX_SOJOURN {
            s += 1;
        }
        lengths.push(s);
    }
    let max_len = *lengths.iter().max().expect("n_sims >= 100");
    if max_len == 1 {
        return Ok(SojournFit::SinglePeriod);
    }
    let mut histogram = vec![0.0; max_len];
    for &s in &lengths {
        histogram[s - 1] += 1.0;
    }
    for h in &mut histogram {
        *h /= n_sims as f64;
    }
    let xs: Vec<f64> = (1..=max_len).map(|s| s as f64).collect();
    let (gamma, lambda) = fit_exponential(&xs, &histogram);
    let predicted: Vec<f64> = xs.iter().map(|&s| gamma * libm::exp(-lambda * s)).collect();
    let r2 = stats::r_squared(&histogram, &predicted);
    let mean_sojourn = lengths.iter().sum::<usize>() as f64 / n_sims as f64;
    Ok(SojournFit::Fitted { gamma, lambda, r2, mean_sojourn, histogram })
}

/// Least-squares fit of `y = gamma exp(-lambda x)`: log-linear start on the
/// positive points, then Levenberg-Marquardt on the raw residuals.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let pos: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(_, &y)| y > 0.0).map(|(&x, &y)| (x, libm::log(y))).collect();
    let (mut gamma, mut lambda) = if pos.len() >= 2 {
        let n = pos.len() as f64;
        let mx = pos.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pos.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pos.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pos.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { -1.0 };
        (libm::exp(my - slope * mx), -slope)
    } else {
        (ys.iter().copied().fold(0.0, f64::max).max(1e-12), 1.0)
    };
    let sse = |g: f64, l: f64| -> f64 {
        xs.iter().zip(ys).map(|(&x, &y)| {
            let r = y - g * libm::exp(-l * x);
            r * r
        }).sum()
    };
    let mut damping = 1e-3;
    let mut current = sse(gamma, lambda);
    for _ in 0..200 {
        // normal equations of the 2-parameter Gauss-Newton step
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let e = libm::exp(-lambda * x);
            let r = y - gamma * e;
            let jg = e;
            let jl = -gamma * x * e;
            a11 += jg * jg;
            a12 += jg * jl;
            a22 += jl * jl;
            b1 += jg * r;
            b2 += jl * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let d11 = a11 * (1.0 + damping);
            let d22 = a22 * (1.0 + damping);
            let det = d11 * d22 - a12 * a12;
            if det.abs() < 1e-300 {
                damping *= 10.0;
                continue;
            }
            let dg = (d22 * b1 - a12 * b2) / det;
            let dl = (d11 * b2 - a12 * b1) / det;
            let (g2, l2) = (gamma + dg, lambda + dl);
            let next = sse(g2, l2);
            if next.is_finite() && next <= current {
                let rel = (current - next) / current.max(1e-300);
                gamma = g2;
                lambda = l2;
                current = next;
                damping = (damping / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (gamma, lambda)
}
