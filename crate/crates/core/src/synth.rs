//! Ground-truth cohorts with a known latent Markov model.
//!
//! States are ordered by severity: index 0 is the healthiest. `p_ud` is
//! non-decreasing in the index and the clinician's per-period discharge
//! probability is a decreasing logistic of it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ingest::{AggregationMode, Event, FeatureSchema, FeatureSpec, RawEventStream};
use crate::linalg::Matrix;
use crate::mdp::{self, CostSpec, MdpError, Policy, ValueFunction};
use crate::rng::{self, SimRng};
use crate::transitions::{LabeledTrajectory, TerminalEvent, TransitionModel, DEFAULT_WINDOW_DAYS};
use crate::StateId;

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    InvalidModel(&'static str),
    InvalidOption(&'static str),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidModel(why) => write!(f, "invalid ground-truth model: {why}"),
            Self::InvalidOption(why) => write!(f, "invalid generator option: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    pub n_states: usize,
    pub keep_matrix: Matrix,
    pub p_ud: Vec<f64>,
    /// Clinician's probability of discharging in each state, per period.
    pub discharge_prob: Vec<f64>,
    pub initial_dist: Vec<f64>,
    /// `H x F` per-state feature means.
    pub feature_means: Matrix,
    /// Per-feature noise standard deviation.
    pub feature_scale: Vec<f64>,
    pub seed: u64,
}

fn probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl GroundTruthModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        let h = self.n_states;
        if h == 0 {
            return Err(SynthError::InvalidModel("no states"));
        }
        if self.keep_matrix.rows() != h || self.keep_matrix.cols() != h {
            return Err(SynthError::InvalidModel("keep matrix shape"));
        }
        for row in self.keep_matrix.iter_rows() {
            if !row.iter().all(|&p| probability(p)) || libm::fabs(row.iter().sum::<f64>() - 1.0) > 1e-9 {
                return Err(SynthError::InvalidModel("keep rows must be probability vectors"));
            }
        }
        if self.p_ud.len() != h || self.discharge_prob.len() != h || self.initial_dist.len() != h {
            return Err(SynthError::InvalidModel("per-state vector length"));
        }
        if !self.p_ud.iter().chain(&self.discharge_prob).all(|&p| probability(p)) {
            return Err(SynthError::InvalidModel("probability outside [0, 1]"));
        }
        if self.p_ud.windows(2).any(|w| w[0] > w[1]) {
            return Err(SynthError::InvalidModel("p_ud must be non-decreasing in severity"));
        }
        if self.initial_dist.iter().any(|&w| !(w >= 0.0)) || self.initial_dist.iter().sum::<f64>() <= 0.0 {
            return Err(SynthError::InvalidModel("initial distribution"));
        }
        if self.feature_means.rows() != h || self.feature_means.cols() != self.feature_scale.len() {
            return Err(SynthError::InvalidModel("feature emitter shape"));
        }
        if self.feature_scale.iter().any(|&s| !(s >= 0.0)) {
            return Err(SynthError::InvalidModel("negative feature scale"));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.feature_scale.len()
    }

    /// Normalized initial-state distribution.
    pub fn initial_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.initial_dist.iter().sum();
        self.initial_dist.iter().map(|w| w / total).collect()
    }

    /// The latent dynamics as a discharge-MDP model.
    pub fn transition_model(&self) -> TransitionModel {
        let p_sd = self.p_ud.iter().map(|p| 1.0 - p).collect();
        TransitionModel {
            n_states: self.n_states,
            keep_matrix: self.keep_matrix.clone(),
            p_ud: self.p_ud.clone(),
            p_sd,
            counts: None,
        }
    }

    /// Exact value of `policy` under the true dynamics.
    pub fn policy_value(&self, policy: &Policy, cost: &CostSpec) -> Result<ValueFunction, MdpError> {
        mdp::policy_evaluation(policy, &self.transition_model(), cost)
    }

    /// `sum_x init(x) J(x)`.
    pub fn expected_initial_value(&self, value: &[f64]) -> f64 {
        self.initial_probabilities().iter().zip(value).map(|(p, j)| p * j).sum()
    }

    pub fn schema(&self) -> FeatureSchema {
        synthetic_schema(self.n_features())
    }
}

/// Shape of a severity-gradient model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientConfig {
    pub n_states: usize,
    pub n_features: usize,
    /// Distance between neighbouring state means on feature 0, in noise
    /// units. Other features use a random slope in `[0.5, 1.5)` of it.
    pub separation: f64,
    pub noise: f64,
    pub p_ud_max: f64,
    /// Per-period keep probabilities of moving one state healthier / sicker.
    pub p_improve: f64,
    pub p_worsen: f64,
    /// Logistic clinician: `1 / (1 + exp(slope * (x - midpoint)))` with `x`
    /// the 0-based severity index.
    pub clinician_slope: f64,
    pub clinician_midpoint: f64,
    pub clinician_max: f64,
    pub seed: u64,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            n_states: 10,
            n_features: 4,
            separation: 6.0,
            noise: 1.0,
            p_ud_max: 0.6,
            p_improve: 0.35,
            p_worsen: 0.15,
            clinician_slope: 1.2,
            clinician_midpoint: 2.5,
            clinician_max: 0.6,
            seed: 0,
        }
    }
}

/// Random model with a severity gradient: patients tend to recover, sicker
/// states have higher UD risk, and the clinician discharges healthier
/// patients more readily.
pub fn gradient(config: &GradientConfig) -> Result<GroundTruthModel, SynthError> {
    let h = config.n_states;
    if h == 0 || config.n_features == 0 {
        return Err(SynthError::InvalidOption("need at least one state and one feature"));
    }
    if !(config.p_improve >= 0.0 && config.p_worsen >= 0.0 && config.p_improve + config.p_worsen <= 1.0) {
        return Err(SynthError::InvalidOption("p_improve + p_worsen must lie in [0, 1]"));
    }
    if !probability(config.p_ud_max) || !probability(config.clinician_max) {
        return Err(SynthError::InvalidOption("probability outside [0, 1]"));
    }
    if !(config.noise >= 0.0) || !config.separation.is_finite() {
        return Err(SynthError::InvalidOption("noise and separation"));
    }
    let mut rng = rng::stream(config.seed, 0);
    let mut keep = Matrix::zeros(h, h);
    for x in 0..h {
        let up = if x > 0 { config.p_improve } else { 0.0 };
        let down = if x + 1 < h { config.p_worsen } else { 0.0 };
        if x > 0 {
            keep[(x, x - 1)] = up;
        }
        if x + 1 < h {
            keep[(x, x + 1)] = down;
        }
        keep[(x, x)] = 1.0 - up - down;
    }
    let mut p_ud: Vec<f64> = (0..h).map(|_| rng::uniform(&mut rng) * config.p_ud_max).collect();
    p_ud.sort_by(f64::total_cmp);
    let discharge_prob = (0..h)
        .map(|x| config.clinician_max / (1.0 + libm::exp(config.clinician_slope * (x as f64 - config.clinician_midpoint))))
        .collect();
    let initial_dist = (0..h).map(|x| 1.0 + x as f64).collect();
    let unit = if config.noise > 0.0 { config.noise } else { 1.0 };
    let mut means = Matrix::zeros(h, config.n_features);
    for j in 0..config.n_features {
        // every feature tracks severity, at its own slope and offset
        let (slope, base) = if j == 0 { (1.0, 0.0) } else { (0.5 + rng::uniform(&mut rng), 10.0 * rng::standard_normal(&mut rng)) };
        for x in 0..h {
            means[(x, j)] = base + x as f64 * slope * config.separation * unit;
        }
    }
    let model = GroundTruthModel {
        n_states: h,
        keep_matrix: keep,
        p_ud,
        discharge_prob,
        initial_dist,
        feature_means: means,
        feature_scale: vec![config.noise; config.n_features],
        seed: config.seed,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortOptions {
    /// Stays still in care after this many periods end CENSORED.
    pub max_periods: usize,
    pub window_days: u32,
}

impl Default for CohortOptions {
    fn default() -> Self {
        Self { max_periods: 200, window_days: DEFAULT_WINDOW_DAYS }
    }
}

pub fn stay_id(i: usize) -> String {
    format!("stay-{i:06}")
}

/// One stay drawn on its own stream.
pub fn sample_stay(model: &GroundTruthModel, id: &str, seed: u64, options: CohortOptions) -> LabeledTrajectory {
    let mut rng = rng::stream_for_id(seed, id);
    let mut x = rng::sample_weighted(&mut rng, &model.initial_dist);
    let mut states = Vec::new();
    let event = loop {
        states.push(StateId::from_index(x));
        if rng::coin(&mut rng, model.discharge_prob[x]) {
            break if rng::coin(&mut rng, model.p_ud[x]) { TerminalEvent::DischargedUd } else { TerminalEvent::DischargedSd };
        }
        if states.len() >= options.max_periods {
            break TerminalEvent::Censored;
        }
        x = rng::sample_weighted(&mut rng, model.keep_matrix.row(x));
    };
    LabeledTrajectory { stay_id: String::from(id), states, terminal_event: event, window_days: options.window_days }
}

pub fn sample_cohort(
    model: &GroundTruthModel,
    n_stays: usize,
    seed: u64,
    options: CohortOptions,
) -> Result<Vec<LabeledTrajectory>, SynthError> {
    if n_stays == 0 {
        return Err(SynthError::InvalidOption("n_stays must be at least 1"));
    }
    if options.max_periods == 0 {
        return Err(SynthError::InvalidOption("max_periods must be at least 1"));
    }
    model.validate()?;
    Ok((0..n_stays).map(|i| sample_stay(model, &stay_id(i), seed, options)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitOptions {
    pub period_hours: f64,
    /// Probability of dropping each measurement; one entry per feature.
    pub drop_fraction: Vec<f64>,
}

impl EmitOptions {
    pub fn uniform(n_features: usize, period_hours: f64, drop: f64) -> Self {
        Self { period_hours, drop_fraction: vec![drop; n_features] }
    }
}

/// Feature names `f0, f1, ...`.
pub fn feature_name(j: usize) -> String {
    format!("f{j}")
}

pub fn synthetic_schema(n_features: usize) -> FeatureSchema {
    FeatureSchema::new(
        (0..n_features).map(|j| FeatureSpec { name: feature_name(j), mode: AggregationMode::Mean }).collect(),
    )
}

/// One Gaussian draw per feature and period, at a random time inside the
/// period, then thinned by the drop fractions.
pub fn emit_features(
    trajectory: &LabeledTrajectory,
    model: &GroundTruthModel,
    seed: u64,
    options: &EmitOptions,
) -> Result<RawEventStream, SynthError> {
    let f = model.n_features();
    if options.drop_fraction.len() != f {
        return Err(SynthError::InvalidOption("one drop fraction per feature"));
    }
    if !options.drop_fraction.iter().all(|&p| probability(p)) {
        return Err(SynthError::InvalidOption("drop fraction outside [0, 1]"));
    }
    if !(options.period_hours > 0.0) || !options.period_hours.is_finite() {
        return Err(SynthError::InvalidOption("period_hours must be positive"));
    }
    let mut rng: SimRng = rng::stream_for_id(rng::derive_seed(seed, 1), &trajectory.stay_id);
    let mut events = Vec::with_capacity(trajectory.len() * f);
    for (t, s) in trajectory.states.iter().enumerate() {
        let x = s.index();
        if x >= model.n_states {
            return Err(SynthError::InvalidOption("trajectory state outside the model"));
        }
        for j in 0..f {
            let value = model.feature_means[(x, j)] + model.feature_scale[j] * rng::standard_normal(&mut rng);
            let offset = rng::uniform(&mut rng);
            let dropped = rng::coin(&mut rng, options.drop_fraction[j]);
            if !dropped {
                events.push(Event {
                    timestamp_hours: (t as f64 + offset) * options.period_hours,
                    feature: feature_name(j),
                    value,
                });
            }
        }
    }
    Ok(RawEventStream { stay_id: trajectory.stay_id.clone(), events })
}
