//! The four compared discharge policies behind one decision interface.
//!
//! | kind | behaviour |
//! |------|-----------|
//! | OP   | table lookup in a solved [`Policy`] |
//! | CP   | replay of the recorded clinician decisions |
//! | RP1  | fair coin every period |
//! | RP2  | clinician timing, but at the clinician's discharge the stay is extended with probability `gamma` |

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::mdp::{Action, Policy};
use crate::rng::{self, SimRng};
use crate::transitions::LabeledTrajectory;
use crate::StateId;

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    ReplayExhausted { step: usize, recorded: usize },
    InvalidGamma(f64),
    StateOutOfRange { state: u32, n_states: usize },
    EmptyTestSet,
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ReplayExhausted { step, recorded } => {
                write!(f, "clinician replay asked for step {step} of a {recorded}-step record")
            }
            Self::InvalidGamma(g) => write!(f, "gamma must lie in [0, 1], got {g}"),
            Self::StateOutOfRange { state, n_states } => {
                write!(f, "state {state} outside 1..={n_states}")
            }
            Self::EmptyTestSet => write!(f, "test set is empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Optimal { policy: Policy },
    Clinician,
    Random { seed: u64 },
    PseudoRandom { gamma: f64, seed: u64 },
}

impl PolicyKind {
    pub fn pseudo_random(gamma: f64, seed: u64) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(PolicyError::InvalidGamma(gamma));
        }
        Ok(Self::PseudoRandom { gamma, seed })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Optimal { .. } => "OP",
            Self::Clinician => "CP",
            Self::Random { .. } => "RP1",
            Self::PseudoRandom { .. } => "RP2",
        }
    }

    /// Seed used to derive per-trajectory random streams.
    pub fn seed(&self) -> u64 {
        match self {
            Self::Random { seed } | Self::PseudoRandom { seed, .. } => *seed,
            _ => 0,
        }
    }

    /// Random stream for one stay; deterministic in `(seed, stay_id)`.
    pub fn stream_for(&self, stay_id: &str) -> SimRng {
        rng::stream_for_id(self.seed(), stay_id)
    }
}

/// Where in a stay a decision is being made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepContext {
    /// 0-based period index since admission.
    pub step: usize,
    /// Number of recorded periods; the clinician discharged at `recorded - 1`.
    pub recorded: usize,
}

impl StepContext {
    pub fn is_recorded_discharge(&self) -> bool {
        self.step + 1 == self.recorded
    }

    pub fn beyond_record(&self) -> bool {
        self.step >= self.recorded
    }
}

pub fn decide(kind: &PolicyKind, state: StateId, ctx: StepContext, rng: &mut SimRng) -> Result<Action, PolicyError> {
    match kind {
        PolicyKind::Optimal { policy } => {
            let x = state.index();
            if x >= policy.len() {
                return Err(PolicyError::StateOutOfRange { state: state.get(), n_states: policy.len() });
            }
            Ok(policy.action(x))
        }
        PolicyKind::Clinician => {
            if ctx.beyond_record() {
                Err(PolicyError::ReplayExhausted { step: ctx.step, recorded: ctx.recorded })
            } else if ctx.is_recorded_discharge() {
                Ok(Action::Discharge)
            } else {
                Ok(Action::Keep)
            }
        }
        PolicyKind::Random { .. } => Ok(if rng::coin(rng, 0.5) { Action::Discharge } else { Action::Keep }),
        PolicyKind::PseudoRandom { gamma, .. } => {
            if ctx.is_recorded_discharge() {
                Ok(if rng::coin(rng, *gamma) { Action::Keep } else { Action::Discharge })
            } else {
                // before the clinician's discharge follow the record; once
                // extended the patient stays until the horizon cap
                Ok(Action::Keep)
            }
        }
    }
}

/// First recorded step at which `policy` discharges, if any.
pub fn first_discharge(policy: &Policy, trajectory: &LabeledTrajectory) -> Option<usize> {
    trajectory.states.iter().position(|s| policy.action(s.index()) == Action::Discharge)
}

/// True when OP keeps the patient at every recorded state, i.e. defers
/// discharge beyond the clinician's.
pub fn op_defers(policy: &Policy, trajectory: &LabeledTrajectory) -> bool {
    first_discharge(policy, trajectory).is_none()
}

/// `gamma` for RP2: fraction of test stays OP keeps beyond the clinician's
/// discharge.
pub fn match_rp2_gamma(op_defers: &[bool]) -> Result<f64, PolicyError> {
    if op_defers.is_empty() {
        return Err(PolicyError::EmptyTestSet);
    }
    Ok(op_defers.iter().filter(|&&d| d).count() as f64 / op_defers.len() as f64)
}

pub fn match_rp2_gamma_for(policy: &Policy, test: &[LabeledTrajectory]) -> Result<f64, PolicyError> {
    let defers: Vec<bool> = test.iter().map(|t| op_defers(policy, t)).collect();
    match_rp2_gamma(&defers)
}

/// Decision record of a policy replayed along one recorded stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayDecision {
    pub stay_id: alloc::string::String,
    pub recorded_periods: usize,
    /// Step at which the policy discharged within the record, if it did.
    pub discharge_step: Option<usize>,
    pub actions: Vec<Action>,
}

/// Applies a policy along the recorded states, stopping at its first
/// discharge. Steps past the record are not simulated here.
pub fn apply_to_trajectory(kind: &PolicyKind, trajectory: &LabeledTrajectory) -> Result<ReplayDecision, PolicyError> {
    let mut rng = kind.stream_for(&trajectory.stay_id);
    let recorded = trajectory.len();
    let mut actions = Vec::new();
    let mut discharge_step = None;
    for (step, &s) in trajectory.states.iter().enumerate() {
        let a = decide(kind, s, StepContext { step, recorded }, &mut rng)?;
        actions.push(a);
        if a == Action::Discharge {
            discharge_step = Some(step);
            break;
        }
    }
    Ok(ReplayDecision { stay_id: trajectory.stay_id.clone(), recorded_periods: recorded, discharge_step, actions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transitions::TerminalEvent;
    use alloc::format;
    use alloc::vec;

    fn trajs() -> Vec<LabeledTrajectory> {
        (0..50)
            .map(|i| LabeledTrajectory::from_ids(format!("s{i}"), &vec![1; 1 + i % 5], TerminalEvent::DischargedSd))
            .collect()
    }

    #[test]
    fn clinician_replay_and_exhaustion() {
        let mut rng = rng::stream(0, 0);
        let s = StateId::from_index(0);
        let ctx = |step| StepContext { step, recorded: 3 };
        assert_eq!(decide(&PolicyKind::Clinician, s, ctx(0), &mut rng), Ok(Action::Keep));
        assert_eq!(decide(&PolicyKind::Clinician, s, ctx(2), &mut rng), Ok(Action::Discharge));
        assert_eq!(
            decide(&PolicyKind::Clinician, s, ctx(3), &mut rng),
            Err(PolicyError::ReplayExhausted { step: 3, recorded: 3 })
        );
    }

    #[test]
    fn rp1_is_reproducible() {
        let kind = PolicyKind::Random { seed: 9 };
        let t = LabeledTrajectory::from_ids("x", &[1, 1, 1, 1, 1, 1], TerminalEvent::DischargedSd);
        let a = apply_to_trajectory(&kind, &t).unwrap();
        let b = apply_to_trajectory(&kind, &t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rp2_extremes() {
        for t in trajs() {
            let never = apply_to_trajectory(&PolicyKind::pseudo_random(0.0, 1).unwrap(), &t).unwrap();
            let cp = apply_to_trajectory(&PolicyKind::Clinician, &t).unwrap();
            assert_eq!(never.discharge_step, cp.discharge_step);
            let always = apply_to_trajectory(&PolicyKind::pseudo_random(1.0, 1).unwrap(), &t).unwrap();
            assert_eq!(always.discharge_step, None);
        }
        assert_eq!(PolicyKind::pseudo_random(1.5, 0), Err(PolicyError::InvalidGamma(1.5)));
    }

    #[test]
    fn gamma_ratio() {
        let mut defers = vec![false; 100];
        defers[..25].iter_mut().for_each(|d| *d = true);
        assert_eq!(match_rp2_gamma(&defers), Ok(0.25));
        assert_eq!(match_rp2_gamma(&[false; 10]), Ok(0.0));
        assert_eq!(match_rp2_gamma(&[]), Err(PolicyError::EmptyTestSet));
    }

    #[test]
    fn op_is_stationary_lookup() {
        let policy = Policy { actions: vec![Action::Keep, Action::Discharge] };
        let kind = PolicyKind::Optimal { policy };
        let mut rng = rng::stream(0, 0);
        for step in 0..10 {
            let ctx = StepContext { step, recorded: 3 };
            assert_eq!(decide(&kind, StateId::from_index(1), ctx, &mut rng), Ok(Action::Discharge));
            assert_eq!(decide(&kind, StateId::from_index(0), ctx, &mut rng), Ok(Action::Keep));
        }
    }
}
