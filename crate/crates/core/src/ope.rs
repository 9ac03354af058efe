//! Model-based off-policy evaluation.
//!
//! A recorded stay is followed while the evaluated policy keeps the patient
//! exactly as the clinician did. At the first disagreement the cost is
//! completed from the model:
//!
//! - the policy discharges earlier: the expected outcome value
//!   `p_SD J(SD) + p_UD J(UD)` of the discharge state;
//! - the policy keeps past the recorded discharge: Monte-Carlo rollouts of
//!   the policy under the model's keep dynamics.
//!
//! When both discharge at the same step the realized outcome is charged.
//! Discounting runs from the first period of the stay. Bootstrap bounds are
//! percentiles of resampled mean costs, with all policies resampled on the
//! same indices.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::mdp::{self, Action, CostSpec, MdpError, Policy};
use crate::policies::{self, decide, PolicyError, PolicyKind, StepContext};
use crate::rng::{self, SimRng};
use crate::stats;
use crate::transitions::{KeepSampler, LabeledTrajectory, TerminalEvent, TransitionModel};

pub const DEFAULT_MC_SIMS: usize = 100;
pub const DEFAULT_BOOTSTRAP: usize = 2000;
pub const DEFAULT_DELTA: f64 = 0.95;
pub const DEFAULT_HORIZON_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum OpeError {
    NotDischarged { stay_id: String },
    EmptyTrajectory { stay_id: String },
    EmptyCosts,
    InvalidConfig(&'static str),
    StateOutOfRange { state: u32, n_states: usize },
    Policy(PolicyError),
    Mdp(MdpError),
}

impl fmt::Display for OpeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotDischarged { stay_id } => write!(f, "stay {stay_id:?} does not end in a discharge"),
            Self::EmptyTrajectory { stay_id } => write!(f, "stay {stay_id:?} has no states"),
            Self::EmptyCosts => write!(f, "no trajectory costs to bootstrap"),
            Self::InvalidConfig(why) => write!(f, "invalid evaluation settings: {why}"),
            Self::StateOutOfRange { state, n_states } => write!(f, "state {state} outside 1..={n_states}"),
            Self::Policy(e) => write!(f, "{e}"),
            Self::Mdp(e) => write!(f, "{e}"),
        }
    }
}

impl From<PolicyError> for OpeError {
    fn from(e: PolicyError) -> Self {
        Self::Policy(e)
    }
}

impl From<MdpError> for OpeError {
    fn from(e: MdpError) -> Self {
        Self::Mdp(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeConfig {
    pub n_mc_sims: usize,
    pub n_bootstrap: usize,
    pub delta: f64,
    pub horizon_cap: usize,
    pub seed: u64,
    #[serde(default = "default_period_hours")]
    pub period_hours: f64,
}

fn default_period_hours() -> f64 {
    crate::ingest::DEFAULT_PERIOD_HOURS
}

impl Default for OpeConfig {
    fn default() -> Self {
        Self {
            n_mc_sims: DEFAULT_MC_SIMS,
            n_bootstrap: DEFAULT_BOOTSTRAP,
            delta: DEFAULT_DELTA,
            horizon_cap: DEFAULT_HORIZON_CAP,
            seed: 0,
            period_hours: default_period_hours(),
        }
    }
}

impl OpeConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), OpeError> {
        if self.n_mc_sims == 0 {
            return Err(OpeError::InvalidConfig("n_mc_sims must be at least 1"));
        }
        if self.n_bootstrap == 0 {
            return Err(OpeError::InvalidConfig("n_bootstrap must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(OpeError::InvalidConfig("delta must lie in (0, 1)"));
        }
        if self.horizon_cap == 0 {
            return Err(OpeError::InvalidConfig("horizon_cap must be at least 1"));
        }
        if !(self.period_hours > 0.0) {
            return Err(OpeError::InvalidConfig("period_hours must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCost {
    pub stay_id: String,
    pub cost: f64,
    /// Monte-Carlo continuation was needed.
    pub simulated: bool,
    /// At least one rollout hit the horizon cap and used the keep-forever tail.
    pub horizon_capped: bool,
}

/// Mean cost with percentile bootstrap bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyCostEstimate {
    pub mean_cost: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Realized discounted cost of the recorded clinician decisions.
pub fn discounted_cp_cost(trajectory: &LabeledTrajectory, cost: &CostSpec) -> Result<f64, OpeError> {
    let outcome = realized_outcome_value(trajectory, cost)?;
    let last = trajectory.len() - 1;
    let mut total = 0.0;
    let mut discount = 1.0;
    for s in &trajectory.states[..last] {
        total += discount * cost.g_keep[s.index()];
        discount *= cost.alpha;
    }
    let x = trajectory.states[last].index();
    total += discount * (cost.g_discharge[x] + cost.alpha * outcome);
    Ok(total)
}

fn realized_outcome_value(trajectory: &LabeledTrajectory, cost: &CostSpec) -> Result<f64, OpeError> {
    if trajectory.is_empty() {
        return Err(OpeError::EmptyTrajectory { stay_id: trajectory.stay_id.clone() });
    }
    match trajectory.terminal_event {
        TerminalEvent::DischargedSd => Ok(cost.j_sd()),
        TerminalEvent::DischargedUd => Ok(cost.j_ud()),
        _ => Err(OpeError::NotDischarged { stay_id: trajectory.stay_id.clone() }),
    }
}

/// Keeps only stays that end in SD or UD.
pub fn discharged_only(trajectories: &[LabeledTrajectory]) -> Vec<LabeledTrajectory> {
    trajectories.iter().filter(|t| t.terminal_event.is_discharge()).cloned().collect()
}

/// Model, costs and a prepared sampler for repeated evaluations.
pub struct Evaluator<'a> {
    model: &'a TransitionModel,
    cost: &'a CostSpec,
    sampler: KeepSampler,
    config: OpeConfig,
}

struct Rollout {
    cost: f64,
    extra_keeps: usize,
    capped: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a TransitionModel, cost: &'a CostSpec, config: OpeConfig) -> Result<Self, OpeError> {
        config.validate()?;
        cost.validate(model.n_states)?;
        Ok(Self { model, cost, sampler: model.sampler(), config })
    }

    pub fn config(&self) -> &OpeConfig {
        &self.config
    }

    fn stream(&self, kind: &PolicyKind, stay_id: &str) -> SimRng {
        rng::stream_for_id(rng::derive_seed(self.config.seed, kind.seed()), stay_id)
    }

    fn check_states(&self, t: &LabeledTrajectory) -> Result<(), OpeError> {
        for s in &t.states {
            if s.index() >= self.model.n_states {
                return Err(OpeError::StateOutOfRange { state: s.get(), n_states: self.model.n_states });
            }
        }
        Ok(())
    }

    fn discharge_term(&self, x: usize) -> f64 {
        self.cost.g_discharge[x] + self.cost.alpha * self.cost.discharge_outcome_value(self.model, x)
    }

    /// Continues a stay that is in state `x` at period `step`, already kept
    /// there, under `kind` until discharge or the horizon cap. Costs are
    /// discounted from period 0.
    fn rollout_after_keep(
        &self,
        kind: &PolicyKind,
        from: usize,
        step: usize,
        recorded: usize,
        rng: &mut SimRng,
    ) -> Result<Rollout, OpeError> {
        let alpha = self.cost.alpha;
        let mut x = self.sampler.next(from, rng);
        let mut t = step + 1;
        let mut discount = libm::pow(alpha, t as f64);
        let mut total = 0.0;
        let mut extra_keeps = 1;
        loop {
            if t >= self.config.horizon_cap {
                total += discount * self.cost.g_keep[x] / (1.0 - alpha);
                return Ok(Rollout { cost: total, extra_keeps, capped: true });
            }
            let a = decide(kind, crate::StateId::from_index(x), StepContext { step: t, recorded }, rng)?;
            match a {
                Action::Discharge => {
                    total += discount * self.discharge_term(x);
                    return Ok(Rollout { cost: total, extra_keeps, capped: false });
                }
                Action::Keep => {
                    total += discount * self.cost.g_keep[x];
                    discount *= alpha;
                    x = self.sampler.next(x, rng);
                    t += 1;
                    extra_keeps += 1;
                }
            }
        }
    }

    /// Estimated discounted cost of `kind` on one discharged stay.
    pub fn trajectory_cost(&self, trajectory: &LabeledTrajectory, kind: &PolicyKind) -> Result<TrajectoryCost, OpeError> {
        let outcome = realized_outcome_value(trajectory, self.cost)?;
        self.check_states(trajectory)?;
        let mut rng = self.stream(kind, &trajectory.stay_id);
        let recorded = trajectory.len();
        let last = recorded - 1;
        let alpha = self.cost.alpha;
        let mut total = 0.0;
        let mut discount = 1.0;
        let done = |cost: f64, simulated: bool, horizon_capped: bool| TrajectoryCost {
            stay_id: trajectory.stay_id.clone(),
            cost,
            simulated,
            horizon_capped,
        };
        for (step, s) in trajectory.states.iter().enumerate() {
            let x = s.index();
            let a = decide(kind, *s, StepContext { step, recorded }, &mut rng)?;
            match (a, step == last) {
                (Action::Keep, false) => {
                    total += discount * self.cost.g_keep[x];
                    discount *= alpha;
                }
                (Action::Discharge, true) => {
                    total += discount * (self.cost.g_discharge[x] + alpha * outcome);
                    return Ok(done(total, false, false));
                }
                (Action::Discharge, false) => {
                    total += discount * self.discharge_term(x);
                    return Ok(done(total, false, false));
                }
                (Action::Keep, true) => {
                    total += discount * self.cost.g_keep[x];
                    let mut sum = 0.0;
                    let mut capped = false;
                    for _ in 0..self.config.n_mc_sims {
                        let r = self.rollout_after_keep(kind, x, step, recorded, &mut rng)?;
                        sum += r.cost;
                        capped |= r.capped;
                    }
                    total += sum / self.config.n_mc_sims as f64;
                    return Ok(done(total, true, capped));
                }
            }
        }
        unreachable!("the last recorded step always returns")
    }

    pub fn costs(&self, trajectories: &[LabeledTrajectory], kind: &PolicyKind) -> Result<Vec<TrajectoryCost>, OpeError> {
        trajectories.iter().map(|t| self.trajectory_cost(t, kind)).collect()
    }

    /// Expected extra periods in care when `policy` keeps a stay past the
    /// recorded discharge, averaged over `n_mc_sims` rollouts from `from`.
    pub fn expected_extra_periods(&self, policy: &PolicyKind, trajectory: &LabeledTrajectory) -> Result<f64, OpeError> {
        self.check_states(trajectory)?;
        let last = trajectory.len() - 1;
        let from = trajectory.states[last].index();
        let mut rng = self.stream(policy, &trajectory.stay_id);
        let mut total = 0usize;
        for _ in 0..self.config.n_mc_sims {
            total += self.rollout_after_keep(policy, from, last, trajectory.len(), &mut rng)?.extra_keeps;
        }
        Ok(total as f64 / self.config.n_mc_sims as f64)
    }
}

/// One-shot version of [`Evaluator::trajectory_cost`].
pub fn trajectory_cost(
    trajectory: &LabeledTrajectory,
    kind: &PolicyKind,
    model: &TransitionModel,
    cost: &CostSpec,
    config: OpeConfig,
) -> Result<TrajectoryCost, OpeError> {
    Evaluator::new(model, cost, config)?.trajectory_cost(trajectory, kind)
}

/// Means of `n_bootstrap` resamples (with replacement) of each cost list.
/// All lists must have the same length and are resampled on shared indices.
pub fn bootstrap_means(costs: &[&[f64]], n_bootstrap: usize, seed: u64) -> Result<Vec<Vec<f64>>, OpeError> {
    let n = costs.first().map_or(0, |c| c.len());
    if n == 0 {
        return Err(OpeError::EmptyCosts);
    }
    if costs.iter().any(|c| c.len() != n) {
        return Err(OpeError::InvalidConfig("paired cost lists differ in length"));
    }
    if n_bootstrap == 0 {
        return Err(OpeError::InvalidConfig("n_bootstrap must be at least 1"));
    }
    let mut out = vec![Vec::with_capacity(n_bootstrap); costs.len()];
    for j in 0..n_bootstrap {
        let mut rng = rng::stream(seed, j as u64);
        let mut sums = vec![0.0; costs.len()];
        for _ in 0..n {
            let i = rng::uniform_index(&mut rng, n);
            for (s, c) in sums.iter_mut().zip(costs) {
                *s += c[i];
            }
        }
        for (o, s) in out.iter_mut().zip(sums) {
            o.push(s / n as f64);
        }
    }
    Ok(out)
}

/// `((1-delta)/2, (1+delta)/2)` percentiles, in percent.
pub fn bound_percentiles(delta: f64) -> (f64, f64) {
    (50.0 * (1.0 - delta), 50.0 * (1.0 + delta))
}

/// Estimate from the sample mean and pre-computed bootstrap means.
pub fn estimate_from_boot(costs: &[f64], boot_means: &[f64], delta: f64) -> Result<PolicyCostEstimate, OpeError> {
    let mean_cost = stats::mean(costs).ok_or(OpeError::EmptyCosts)?;
    let sorted = stats::sorted_copy(boot_means);
    let (lo_q, hi_q) = bound_percentiles(delta);
    let lower = stats::percentile_sorted(&sorted, lo_q).ok_or(OpeError::EmptyCosts)?;
    let upper = stats::percentile_sorted(&sorted, hi_q).ok_or(OpeError::EmptyCosts)?;
    // a handful of resamples can miss the sample mean entirely
    Ok(PolicyCostEstimate { mean_cost, lower_bound: lower.min(mean_cost), upper_bound: upper.max(mean_cost) })
}

pub fn bootstrap_bounds(costs: &[f64], n_bootstrap: usize, delta: f64, seed: u64) -> Result<PolicyCostEstimate, OpeError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(OpeError::InvalidConfig("delta must lie in (0, 1)"));
    }
    let boot = bootstrap_means(&[costs], n_bootstrap, seed)?;
    estimate_from_boot(costs, &boot[0], delta)
}

/// Per-policy costs and bounds from one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub label: String,
    pub estimate: PolicyCostEstimate,
    pub costs: Vec<f64>,
    pub boot_means: Vec<f64>,
    pub simulated: usize,
    pub horizon_capped: usize,
}

/// Evaluates several policies on the same stays with paired bootstrap
/// resamples.
pub fn evaluate_policies(
    evaluator: &Evaluator<'_>,
    trajectories: &[LabeledTrajectory],
    kinds: &[PolicyKind],
) -> Result<Vec<PolicyEvaluation>, OpeError> {
    let config = *evaluator.config();
    let mut per_policy = Vec::with_capacity(kinds.len());
    for k in kinds {
        per_policy.push(evaluator.costs(trajectories, k)?);
    }
    let cost_lists: Vec<Vec<f64>> = per_policy.iter().map(|c| c.iter().map(|t| t.cost).collect()).collect();
    let refs: Vec<&[f64]> = cost_lists.iter().map(Vec::as_slice).collect();
    let boot = bootstrap_means(&refs, config.n_bootstrap, config.seed)?;
    let mut out = Vec::with_capacity(kinds.len());
    for ((kind, costs), (details, boot_means)) in kinds.iter().zip(cost_lists).zip(per_policy.iter().zip(boot)) {
        let estimate = estimate_from_boot(&costs, &boot_means, config.delta)?;
        out.push(PolicyEvaluation {
            label: String::from(kind.label()),
            estimate,
            simulated: details.iter().filter(|d| d.simulated).count(),
            horizon_capped: details.iter().filter(|d| d.horizon_capped).count(),
            costs,
            boot_means,
        });
    }
    Ok(out)
}

/// Upper bound of OP and lower bound of CP after pooling the bootstrap
/// estimates of the first `models` trained models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub models: usize,
    pub op_upper: f64,
    pub cp_lower: f64,
}

pub fn bound_evolution(op_boot: &[Vec<f64>], cp_boot: &[Vec<f64>], delta: f64) -> Vec<BoundPoint> {
    let (lo_q, hi_q) = bound_percentiles(delta);
    let mut op_pool = Vec::new();
    let mut cp_pool = Vec::new();
    let mut out = Vec::new();
    for (i, (op, cp)) in op_boot.iter().zip(cp_boot).enumerate() {
        op_pool.extend_from_slice(op);
        cp_pool.extend_from_slice(cp);
        let op_upper = stats::percentile(&op_pool, hi_q).unwrap_or(f64::NAN);
        let cp_lower = stats::percentile(&cp_pool, lo_q).unwrap_or(f64::NAN);
        out.push(BoundPoint { models: i + 1, op_upper, cp_lower });
    }
    out
}

/// One row of the performance-curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub g_ud: f64,
    pub n_stays: usize,
    /// Health states in which OP discharges.
    pub op_discharge_states: usize,
    pub op_n_discharged: usize,
    /// Expected UD fraction among OP discharges (realized outcome at the
    /// clinician's step, model `p_UD` for earlier discharges).
    pub op_frac_ud: Option<f64>,
    pub op_frac_ud_se: Option<f64>,
    pub op_mean_los_days: f64,
    pub rp2_gamma: f64,
    pub rp2_n_discharged: usize,
    pub rp2_frac_ud: Option<f64>,
    pub rp2_frac_ud_se: Option<f64>,
    pub cp_n_discharged: usize,
    pub cp_frac_ud: Option<f64>,
    pub cp_mean_los_days: f64,
}

fn fraction(num: f64, n: usize) -> (Option<f64>, Option<f64>) {
    if n == 0 {
        return (None, None);
    }
    let p = num / n as f64;
    (Some(p), Some(libm::sqrt((p * (1.0 - p)).max(0.0) / n as f64)))
}

/// Solves OP on `policy_model` for every `g_UD` and replays it on the test
/// stays; early-discharge risks and deferred-stay rollouts come from
/// `eval_model` (usually estimated on the test stays themselves).
pub fn performance_curves(
    policy_model: &TransitionModel,
    eval_model: &TransitionModel,
    cost_template: &CostSpec,
    gud_grid: &[f64],
    test: &[LabeledTrajectory],
    config: OpeConfig,
) -> Result<Vec<CurvePoint>, OpeError> {
    config.validate()?;
    if policy_model.n_states != eval_model.n_states {
        return Err(OpeError::InvalidConfig("policy and evaluation models differ in state count"));
    }
    if test.is_empty() {
        return Err(OpeError::Policy(PolicyError::EmptyTestSet));
    }
    for t in test {
        realized_outcome_value(t, cost_template)?;
    }
    let days = config.period_hours / 24.0;
    let n = test.len();
    let cp_ud = test.iter().filter(|t| t.terminal_event.is_unsuccessful()).count();
    let cp_los: f64 = test.iter().map(|t| t.len() as f64).sum::<f64>() / n as f64;
    let mut out = Vec::with_capacity(gud_grid.len());
    for &g_ud in gud_grid {
        if !(g_ud >= 0.0) || !g_ud.is_finite() {
            return Err(OpeError::InvalidConfig("g_UD grid values must be finite and non-negative"));
        }
        let cost = cost_template.with_g_ud(g_ud);
        let solution = mdp::policy_iteration(policy_model, &cost, &mdp::default_initial_policy(policy_model.n_states))?;
        let policy = solution.policy;
        let kind = PolicyKind::Optimal { policy: policy.clone() };
        let evaluator = Evaluator::new(eval_model, &cost, config)?;
        let mut discharged = 0usize;
        let mut ud_mass = 0.0;
        let mut los = 0.0;
        let mut defers = Vec::with_capacity(n);
        for t in test {
            evaluator.check_states(t)?;
            match policies::first_discharge(&policy, t) {
                Some(step) => {
                    discharged += 1;
                    ud_mass += if step + 1 == t.len() {
                        if t.terminal_event.is_unsuccessful() { 1.0 } else { 0.0 }
                    } else {
                        eval_model.p_ud[t.states[step].index()]
                    };
                    los += (step + 1) as f64;
                    defers.push(false);
                }
                None => {
                    los += t.len() as f64 + evaluator.expected_extra_periods(&kind, t)?;
                    defers.push(true);
                }
            }
        }
        let gamma = policies::match_rp2_gamma(&defers)?;
        let mut rp2_discharged = 0usize;
        let mut rp2_ud = 0usize;
        for t in test {
            let mut rng = rng::stream_for_id(config.seed, &t.stay_id);
            if !rng::coin(&mut rng, gamma) {
                rp2_discharged += 1;
                if t.terminal_event.is_unsuccessful() {
                    rp2_ud += 1;
                }
            }
        }
        let (op_frac_ud, op_frac_ud_se) = fraction(ud_mass, discharged);
        let (rp2_frac_ud, rp2_frac_ud_se) = fraction(rp2_ud as f64, rp2_discharged);
        out.push(CurvePoint {
            g_ud,
            n_stays: n,
            op_discharge_states: policy.discharge_count(),
            op_n_discharged: discharged,
            op_frac_ud,
            op_frac_ud_se,
            op_mean_los_days: los / n as f64 * days,
            rp2_gamma: gamma,
            rp2_n_discharged: rp2_discharged,
            rp2_frac_ud,
            rp2_frac_ud_se,
            cp_n_discharged: n,
            cp_frac_ud: Some(cp_ud as f64 / n as f64),
            cp_mean_los_days: cp_los * days,
        });
    }
    Ok(out)
}

/// UD rate per bucket of realized clinician cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub bucket: usize,
    pub n: usize,
    pub cost_min: f64,
    pub cost_max: f64,
    pub mean_cost: f64,
    pub ud_rate: f64,
}

pub const CALIBRATION_BUCKETS: usize = 10;

/// Decile buckets of realized CP cost. Tied costs share the bucket of their
/// first rank; empty buckets are dropped.
pub fn policy_calibration(test: &[LabeledTrajectory], cost: &CostSpec) -> Result<Vec<CalibrationRow>, OpeError> {
    if test.is_empty() {
        return Err(OpeError::EmptyCosts);
    }
    let mut rows: Vec<(f64, bool)> = test
        .iter()
        .map(|t| Ok((discounted_cp_cost(t, cost)?, t.terminal_event.is_unsuccessful())))
        .collect::<Result<_, OpeError>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = rows.len();
    let mut buckets: Vec<Vec<(f64, bool)>> = vec![Vec::new(); CALIBRATION_BUCKETS];
    let mut first_rank = 0;
    for (rank, &row) in rows.iter().enumerate() {
        if rank > 0 && rows[rank - 1].0 != row.0 {
            first_rank = rank;
        }
        buckets[first_rank * CALIBRATION_BUCKETS / n].push(row);
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(bucket, b)| {
            let costs: Vec<f64> = b.iter().map(|r| r.0).collect();
            CalibrationRow {
                bucket,
                n: b.len(),
                cost_min: costs[0],
                cost_max: costs[costs.len() - 1],
                mean_cost: stats::mean(&costs).unwrap_or(0.0),
                ud_rate: b.iter().filter(|r| r.1).count() as f64 / b.len() as f64,
            }
        })
        .collect())
}

/// Mean of `J(x_0)` over the given stays.
pub fn mean_initial_value(value: &[f64], trajectories: &[LabeledTrajectory]) -> Option<f64> {
    let v: Vec<f64> = trajectories.iter().filter_map(|t| t.states.first()).map(|s| value[s.index()]).collect();
    stats::mean(&v)
}

/// OP kind for a solved policy.
pub fn optimal(policy: &Policy) -> PolicyKind {
    PolicyKind::Optimal { policy: policy.clone() }
}
