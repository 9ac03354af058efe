//! Infinite-horizon discounted discharge MDP.
//!
//! States are the `H` health states plus the absorbing outcomes SD and UD.
//! In state `x` the two actions have Q-values
//!
//! ```text
//! Q(x, K) = g(x,K) + alpha * sum_y P(y|x,K) J(y)
//! Q(x, D) = g(x,D) + alpha * (P(SD|x,D) J(SD) + P(UD|x,D) J(UD))
//! ```
//!
//! and the absorbing values are fixed at `J(SD) = g(SD)/(1-alpha)`,
//! `J(UD) = g(UD)/(1-alpha)`. Equal Q-values resolve to keep.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{sup_norm_diff, Lu, Matrix};
use crate::transitions::TransitionModel;

pub const DEFAULT_ALPHA: f64 = 0.95;
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-8;
pub const MAX_ENUMERATION_STATES: usize = 12;
const EVALUATION_RESIDUAL: f64 = 1e-9;
const MAX_PI_ITERATIONS: usize = 100_000;
const MAX_VI_ITERATIONS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum MdpError {
    DimensionMismatch { expected: usize, found: usize },
    InvalidDiscount(f64),
    NonFiniteCost,
    InvalidTolerance(f64),
    TooLarge { n_states: usize },
    Singular,
    Residual(f64),
    NoConvergence,
}

impl fmt::Display for MdpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, found } => {
                write!(f, "expected {expected} states, found {found}")
            }
            Self::InvalidDiscount(a) => write!(f, "discount must lie in (0, 1), got {a}"),
            Self::NonFiniteCost => write!(f, "stage costs must be finite"),
            Self::InvalidTolerance(t) => write!(f, "tolerance must be positive, got {t}"),
            Self::TooLarge { n_states } => {
                write!(f, "enumeration limited to {MAX_ENUMERATION_STATES} states, got {n_states}")
            }
            Self::Singular => write!(f, "policy evaluation system is singular"),
            Self::Residual(r) => write!(f, "policy evaluation residual {r:e} exceeds tolerance"),
            Self::NoConvergence => write!(f, "solver did not converge"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "K")]
    Keep,
    #[serde(rename = "D")]
    Discharge,
}

impl Action {
    pub fn as_char(self) -> char {
        match self {
            Self::Keep => 'K',
            Self::Discharge => 'D',
        }
    }
}

/// Stage costs and discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub g_keep: Vec<f64>,
    pub g_discharge: Vec<f64>,
    pub g_sd: f64,
    pub g_ud: f64,
    pub alpha: f64,
    pub window_days: u32,
}

impl CostSpec {
    /// One unit per period in care, free discharge, no reward for SD.
    pub fn standard(n_states: usize, g_ud: f64) -> Self {
        Self {
            g_keep: vec![1.0; n_states],
            g_discharge: vec![0.0; n_states],
            g_sd: 0.0,
            g_ud,
            alpha: DEFAULT_ALPHA,
            window_days: crate::transitions::DEFAULT_WINDOW_DAYS,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_g_ud(&self, g_ud: f64) -> Self {
        Self { g_ud, ..self.clone() }
    }

    pub fn n_states(&self) -> usize {
        self.g_keep.len()
    }

    pub fn validate(&self, n_states: usize) -> Result<(), MdpError> {
        for len in [self.g_keep.len(), self.g_discharge.len()] {
            if len != n_states {
                return Err(MdpError::DimensionMismatch { expected: n_states, found: len });
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MdpError::InvalidDiscount(self.alpha));
        }
        let finite = self.g_keep.iter().chain(&self.g_discharge).all(|g| g.is_finite())
            && self.g_sd.is_finite()
            && self.g_ud.is_finite();
        if !finite {
            return Err(MdpError::NonFiniteCost);
        }
        Ok(())
    }

    pub fn j_sd(&self) -> f64 {
        self.g_sd / (1.0 - self.alpha)
    }

    pub fn j_ud(&self) -> f64 {
        self.g_ud / (1.0 - self.alpha)
    }

    /// Expected cost-to-go right after discharging from `x` (before discounting).
    pub fn discharge_outcome_value(&self, model: &TransitionModel, x: usize) -> f64 {
        model.p_sd[x] * self.j_sd() + model.p_ud[x] * self.j_ud()
    }
}

/// Deterministic stationary policy over the health states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<Action>,
}

impl Policy {
    pub fn uniform(n_states: usize, action: Action) -> Self {
        Self { actions: vec![action; n_states] }
    }

    /// Bit `x` of `mask` set means discharge in state `x`.
    pub fn from_mask(n_states: usize, mask: u64) -> Self {
        Self {
            actions: (0..n_states)
                .map(|x| if mask >> x & 1 == 1 { Action::Discharge } else { Action::Keep })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, x: usize) -> Action {
        self.actions[x]
    }

    pub fn discharge_count(&self) -> usize {
        self.actions.iter().filter(|a| **a == Action::Discharge).count()
    }
}

/// Cost-to-go over `1..H` plus the absorbing outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub states: Vec<f64>,
    pub sd: f64,
    pub ud: f64,
}

impl ValueFunction {
    pub fn new(states: Vec<f64>, cost: &CostSpec) -> Self {
        Self { states, sd: cost.j_sd(), ud: cost.j_ud() }
    }

    pub fn zeros(n_states: usize, cost: &CostSpec) -> Self {
        Self::new(vec![0.0; n_states], cost)
    }

    /// `[J(1), .., J(H), J(SD), J(UD)]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.states.clone();
        v.push(self.sd);
        v.push(self.ud);
        v
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        sup_norm_diff(&self.to_vec(), &other.to_vec())
    }
}

fn check(model: &TransitionModel, cost: &CostSpec) -> Result<(), MdpError> {
    cost.validate(model.n_states)
}

fn q_keep(model: &TransitionModel, cost: &CostSpec, states: &[f64], x: usize) -> f64 {
    let future: f64 = model.keep_row(x).iter().zip(states).map(|(p, j)| p * j).sum();
    cost.g_keep[x] + cost.alpha * future
}

fn q_discharge(model: &TransitionModel, cost: &CostSpec, x: usize) -> f64 {
    cost.g_discharge[x] + cost.alpha * cost.discharge_outcome_value(model, x)
}

/// `(Q(x,K), Q(x,D))` for every health state under `j`.
pub fn q_values(j: &ValueFunction, model: &TransitionModel, cost: &CostSpec) -> Vec<(f64, f64)> {
    (0..model.n_states)
        .map(|x| (q_keep(model, cost, &j.states, x), q_discharge(model, cost, x)))
        .collect()
}

/// One application of the Bellman operator `T`, with the greedy policy.
pub fn bellman_backup(
    j: &ValueFunction,
    model: &TransitionModel,
    cost: &CostSpec,
) -> Result<(ValueFunction, Policy), MdpError> {
    check(model, cost)?;
    if j.states.len() != model.n_states {
        return Err(MdpError::DimensionMismatch { expected: model.n_states, found: j.states.len() });
    }
    let mut values = Vec::with_capacity(model.n_states);
    let mut actions = Vec::with_capacity(model.n_states);
    for (k, d) in q_values(j, model, cost) {
        if d < k {
            values.push(d);
            actions.push(Action::Discharge);
        } else {
            values.push(k);
            actions.push(Action::Keep);
        }
    }
    Ok((ValueFunction::new(values, cost), Policy { actions }))
}

/// `T_mu J`: backup with the action fixed by `mu`.
pub fn policy_backup(j: &ValueFunction, mu: &Policy, model: &TransitionModel, cost: &CostSpec) -> ValueFunction {
    let values = (0..model.n_states)
        .map(|x| match mu.action(x) {
            Action::Keep => q_keep(model, cost, &j.states, x),
            Action::Discharge => q_discharge(model, cost, x),
        })
        .collect();
    ValueFunction::new(values, cost)
}

/// Exact `J_mu` from `(I - alpha P_mu) J = g_mu`.
///
/// The absorbing rows are known in closed form, so the system is reduced to
/// the `H` health states with the outcome terms moved to the right-hand side.
pub fn policy_evaluation(mu: &Policy, model: &TransitionModel, cost: &CostSpec) -> Result<ValueFunction, MdpError> {
    check(model, cost)?;
    let h = model.n_states;
    if mu.len() != h {
        return Err(MdpError::DimensionMismatch { expected: h, found: mu.len() });
    }
    let mut a = Matrix::identity(h);
    let mut rhs = vec![0.0; h];
    for x in 0..h {
        match mu.action(x) {
            Action::Keep => {
                for (y, p) in model.keep_row(x).iter().enumerate() {
                    a[(x, y)] -= cost.alpha * p;
                }
                rhs[x] = cost.g_keep[x];
            }
            Action::Discharge => {
                rhs[x] = q_discharge(model, cost, x);
            }
        }
    }
    let lu = Lu::factor(&a).map_err(|_| MdpError::Singular)?;
    let states = lu.solve(&rhs);
    let j = ValueFunction::new(states, cost);
    let residual = evaluation_residual(mu, &j, model, cost);
    let scale = j.states.iter().fold(1.0f64, |m, v| m.max(libm::fabs(*v)));
    if !(residual <= EVALUATION_RESIDUAL * scale) {
        return Err(MdpError::Residual(residual));
    }
    Ok(j)
}

/// `||(I - alpha P_mu) J - g_mu||_inf` over all `H + 2` states.
pub fn evaluation_residual(mu: &Policy, j: &ValueFunction, model: &TransitionModel, cost: &CostSpec) -> f64 {
    let backed = policy_backup(j, mu, model, cost);
    let health = sup_norm_diff(&backed.states, &j.states);
    // absorbing rows: J - alpha J - g
    let sd = libm::fabs(j.sd * (1.0 - cost.alpha) - cost.g_sd);
    let ud = libm::fabs(j.ud * (1.0 - cost.alpha) - cost.g_ud);
    health.max(sd).max(ud)
}

/// `||J - T J||_inf`.
pub fn bellman_residual(j: &ValueFunction, model: &TransitionModel, cost: &CostSpec) -> Result<f64, MdpError> {
    let (tj, _) = bellman_backup(j, model, cost)?;
    Ok(tj.sup_distance(j))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub policy: Policy,
    pub value: ValueFunction,
    pub iterations: usize,
}

/// Policy iteration with per-iteration values kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterationTrace {
    pub solution: Solution,
    /// `J_{mu^k}` for every evaluated policy, in order.
    pub evaluations: Vec<ValueFunction>,
}

/// Discharge-everywhere starting policy.
pub fn default_initial_policy(n_states: usize) -> Policy {
    Policy::uniform(n_states, Action::Discharge)
}

pub fn policy_iteration(model: &TransitionModel, cost: &CostSpec, mu0: &Policy) -> Result<Solution, MdpError> {
    policy_iteration_trace(model, cost, mu0).map(|t| t.solution)
}

/// Alternates exact evaluation and greedy improvement until the greedy
/// policy reproduces itself (or `J` is a fixed point of `T` to rounding).
pub fn policy_iteration_trace(
    model: &TransitionModel,
    cost: &CostSpec,
    mu0: &Policy,
) -> Result<PolicyIterationTrace, MdpError> {
    check(model, cost)?;
    if mu0.len() != model.n_states {
        return Err(MdpError::DimensionMismatch { expected: model.n_states, found: mu0.len() });
    }
    let mut mu = mu0.clone();
    let mut evaluations = Vec::new();
    for k in 1..=MAX_PI_ITERATIONS {
        let j = policy_evaluation(&mu, model, cost)?;
        let (tj, greedy) = bellman_backup(&j, model, cost)?;
        let scale = 1.0 + j.states.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        let fixed_point = tj.sup_distance(&j) <= 1e-12 * scale;
        evaluations.push(j.clone());
        if greedy == mu || fixed_point {
            return Ok(PolicyIterationTrace {
                solution: Solution { policy: greedy, value: j, iterations: k },
                evaluations,
            });
        }
        mu = greedy;
    }
    Err(MdpError::NoConvergence)
}

/// Repeated backups from `J = 0` until the sup-norm change drops below
/// `tol (1 - alpha) / (2 alpha)`, which bounds the error of the greedy
/// policy's value by `tol`.
pub fn value_iteration(model: &TransitionModel, cost: &CostSpec, tol: f64) -> Result<Solution, MdpError> {
    check(model, cost)?;
    if !(tol > 0.0) {
        return Err(MdpError::InvalidTolerance(tol));
    }
    let threshold = tol * (1.0 - cost.alpha) / (2.0 * cost.alpha);
    let mut j = ValueFunction::zeros(model.n_states, cost);
    for k in 1..=MAX_VI_ITERATIONS {
        let (next, policy) = bellman_backup(&j, model, cost)?;
        let change = sup_norm_diff(&next.states, &j.states);
        j = next;
        if change < threshold {
            return Ok(Solution { policy, value: j, iterations: k });
        }
    }
    Err(MdpError::NoConvergence)
}

/// Oracle: evaluates all `2^H` deterministic stationary policies exactly.
///
/// Returns the policy with the smallest total cost (lowest mask on ties, so
/// keep is preferred) and the pointwise minimum of all evaluated values.
pub fn enumerate_policies(model: &TransitionModel, cost: &CostSpec) -> Result<(Policy, ValueFunction), MdpError> {
    check(model, cost)?;
    let h = model.n_states;
    if h > MAX_ENUMERATION_STATES {
        return Err(MdpError::TooLarge { n_states: h });
    }
    let mut best: Option<(f64, Policy)> = None;
    let mut pointwise = vec![f64::INFINITY; h];
    for mask in 0..(1u64 << h) {
        let mu = Policy::from_mask(h, mask);
        let j = policy_evaluation(&mu, model, cost)?;
        for (m, v) in pointwise.iter_mut().zip(&j.states) {
            *m = m.min(*v);
        }
        let total: f64 = j.states.iter().sum();
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, mu));
        }
    }
    let (_, policy) = best.expect("at least one policy");
    Ok((policy, ValueFunction::new(pointwise, cost)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(p_ud: f64) -> TransitionModel {
        TransitionModel::new(Matrix::identity(1), vec![p_ud]).unwrap()
    }

    #[test]
    fn threshold_closed_form() {
        let model = single_state(1.0);
        let cost = CostSpec::standard(1, 3.0);
        let j = policy_evaluation(&Policy::uniform(1, Action::Keep), &model, &cost).unwrap();
        assert!((j.states[0] - 20.0).abs() < 1e-9);
        let q = q_values(&j, &model, &cost);
        assert!((q[0].1 - 57.0).abs() < 1e-9);
        let sol = policy_iteration(&model, &cost, &default_initial_policy(1)).unwrap();
        assert_eq!(sol.policy.actions, vec![Action::Keep]);
        assert!(sol.iterations <= 2);
        assert!((sol.value.states[0] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn zero_penalty_discharges() {
        let model = single_state(1.0);
        let cost = CostSpec::standard(1, 0.0);
        let sol = policy_iteration(&model, &cost, &Policy::uniform(1, Action::Keep)).unwrap();
        assert_eq!(sol.policy.actions, vec![Action::Discharge]);
        assert_eq!(sol.value.states[0], 0.0);
    }

    #[test]
    fn backup_from_zero() {
        let model = TransitionModel::new(Matrix::identity(3), vec![0.2, 0.5, 0.9]).unwrap();
        let cost = CostSpec::standard(3, 0.0);
        let (j, mu) = bellman_backup(&ValueFunction::zeros(3, &cost), &model, &cost).unwrap();
        assert_eq!(j.states, vec![0.0; 3]);
        assert_eq!(mu, Policy::uniform(3, Action::Discharge));
    }

    #[test]
    fn discharge_everywhere_is_free() {
        let model = TransitionModel::new(Matrix::identity(2), vec![0.3, 0.7]).unwrap();
        let cost = CostSpec::standard(2, 0.0);
        let j = policy_evaluation(&Policy::uniform(2, Action::Discharge), &model, &cost).unwrap();
        assert_eq!(j.states, vec![0.0, 0.0]);
    }

    #[test]
    fn absorbing_values_exact() {
        let cost = CostSpec::standard(2, 3.0);
        let j = ValueFunction::zeros(2, &cost);
        assert_eq!(j.ud, 3.0 / (1.0 - 0.95));
        assert_eq!(j.sd, 0.0);
    }

    #[test]
    fn heavy_discounting_is_myopic() {
        let model = TransitionModel::new(Matrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]), vec![0.1, 0.4]).unwrap();
        let cost = CostSpec::standard(2, 3.0).with_alpha(0.1);
        let sol = value_iteration(&model, &cost, 1e-8).unwrap();
        assert!(sol.iterations < 20);
        // one-step costs: discharge = 0.1 * p_ud * 3 / 0.9, keep >= 1
        for x in 0..2 {
            assert!((sol.value.states[x] - 0.1 * model.p_ud[x] * 3.0 / 0.9).abs() < 1e-8);
        }
    }

    #[test]
    fn validation_errors() {
        let model = single_state(0.5);
        let bad_alpha = CostSpec::standard(1, 1.0).with_alpha(1.0);
        assert_eq!(policy_evaluation(&Policy::uniform(1, Action::Keep), &model, &bad_alpha), Err(MdpError::InvalidDiscount(1.0)));
        let bad_dim = CostSpec::standard(2, 1.0);
        assert!(matches!(policy_iteration(&model, &bad_dim, &default_initial_policy(1)), Err(MdpError::DimensionMismatch { .. })));
        let big = TransitionModel::new(Matrix::identity(13), vec![0.5; 13]).unwrap();
        assert_eq!(enumerate_policies(&big, &CostSpec::standard(13, 1.0)), Err(MdpError::TooLarge { n_states: 13 }));
        assert_eq!(value_iteration(&model, &CostSpec::standard(1, 1.0), 0.0), Err(MdpError::InvalidTolerance(0.0)));
    }

    #[test]
    fn symmetric_states_symmetric_policy() {
        let model = TransitionModel::new(Matrix::from_rows(&[vec![0.6, 0.4], vec![0.4, 0.6]]), vec![0.3, 0.3]).unwrap();
        for g_ud in [0.5, 2.0, 10.0] {
            let (mu, _) = enumerate_policies(&model, &CostSpec::standard(2, g_ud)).unwrap();
            assert_eq!(mu.actions[0], mu.actions[1]);
        }
    }
}
