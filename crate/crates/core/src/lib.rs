//! Discharge-policy toolkit core.
//!
//! Everything here is pure computation over in-memory data and builds
//! without `std` (an allocator is required):
//!
//! - [`ingest`]: binning of timestamped measurements into fixed periods,
//!   carry-forward and regression imputation, percentile capping.
//! - [`cluster`]: min-max scaling and k-means health states.
//! - [`transitions`]: empirical keep matrix and discharge-outcome estimates,
//!   goodness-of-fit and sojourn-time checks.
//! - [`mdp`]: Bellman backups, exact policy evaluation, policy iteration,
//!   value iteration and an enumeration oracle.
//! - [`policies`]: optimal, clinician-replay and random baselines.
//! - [`ope`]: model-based off-policy evaluation with bootstrap bounds,
//!   performance curves and calibration tables.
//! - [`synth`]: ground-truth cohorts with known dynamics.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod cluster;
pub mod ingest;
pub mod linalg;
pub mod mdp;
pub mod ope;
pub mod policies;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod transitions;

mod state;

pub use state::StateId;
