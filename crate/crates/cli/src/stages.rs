//! Pipeline stages shared by the subcommands and `run`.

use std::collections::BTreeMap;

use discharge_core::cluster::{KMeansConfig, KMeansFit, StateModel};
use discharge_core::ingest::{self, FeatureSchema, PeriodFeatureMatrix, Preprocessor, RawEventStream};
use discharge_core::linalg::Matrix;
use discharge_core::mdp::{self, CostSpec, Solution};
use discharge_core::rng;
use discharge_core::synth::{self, CohortOptions, EmitOptions, GroundTruthModel};
use discharge_core::transitions::LabeledTrajectory;
use serde::{Deserialize, Serialize};

use crate::config::{IngestConfig, Method, SyntheticConfig};
use crate::error::{CliError, Result};
use crate::formats::Outcome;

/// Raw inputs: schema, events per stay and outcomes.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub schema: FeatureSchema,
    pub streams: Vec<RawEventStream>,
    pub outcomes: BTreeMap<String, Outcome>,
}

/// A simulated cohort together with the model that generated it.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub truth: GroundTruthModel,
    pub trajectories: Vec<LabeledTrajectory>,
    pub cohort: Cohort,
}

pub fn simulate(cfg: &SyntheticConfig, period_hours: f64, window_days: u32, seed: u64) -> Result<Simulated> {
    let truth = synth::gradient(&cfg.model)?;
    let options = CohortOptions { max_periods: cfg.max_periods, window_days };
    let trajectories = synth::sample_cohort(&truth, cfg.n_stays, rng::derive_seed(seed, 1), options)?;
    let emit = EmitOptions::uniform(truth.n_features(), period_hours, cfg.drop_fraction);
    let emit_seed = rng::derive_seed(seed, 2);
    let streams = trajectories
        .iter()
        .map(|t| synth::emit_features(t, &truth, emit_seed, &emit))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = trajectories
        .iter()
        .map(|t| {
            let o = Outcome {
                stay_id: t.stay_id.clone(),
                terminal_event: t.terminal_event.as_str().to_string(),
                n_periods: t.len(),
                window_days: t.window_days,
            };
            (o.stay_id.clone(), o)
        })
        .collect();
    let schema = synth::synthetic_schema(truth.n_features());
    Ok(Simulated { truth, trajectories, cohort: Cohort { schema, streams, outcomes } })
}

/// One included stay after binning.
#[derive(Debug, Clone)]
pub struct Stay {
    pub outcome: Outcome,
    pub binned: PeriodFeatureMatrix,
}

/// Bins every stay that has an outcome and passes the inclusion rule.
/// Returns the stays in id order and the number excluded.
pub fn bin_stays(cohort: &Cohort, cfg: &IngestConfig) -> Result<(Vec<Stay>, usize)> {
    let mut by_id: BTreeMap<&str, &RawEventStream> = BTreeMap::new();
    for s in &cohort.streams {
        if !cohort.outcomes.contains_key(&s.stay_id) {
            return Err(CliError::data(format!("events for stay {} have no outcome", s.stay_id)));
        }
        by_id.insert(&s.stay_id, s);
    }
    let mut stays = Vec::new();
    let mut excluded = 0;
    for (id, outcome) in &cohort.outcomes {
        outcome.event()?;
        let stream = match by_id.get(id.as_str()) {
            Some(s) if !s.events.is_empty() && s.passes_inclusion(&cohort.schema, cfg.max_missing_fraction) => s,
            _ => {
                excluded += 1;
                continue;
            }
        };
        let binned = ingest::bin_and_aggregate_periods(stream, &cohort.schema, cfg.period_hours, outcome.n_periods)?;
        stays.push(Stay { outcome: outcome.clone(), binned });
    }
    Ok((stays, excluded))
}

/// Fits capping and imputation on `train` and applies them to `all`.
pub fn preprocess(train: &[&Stay], all: &[Stay], n_features: usize, rounds: usize) -> Result<Vec<PeriodFeatureMatrix>> {
    let binned: Vec<PeriodFeatureMatrix> = train.iter().map(|s| s.binned.clone()).collect();
    let pre = Preprocessor::fit(&binned, n_features, rounds)?;
    all.iter()
        .map(|s| {
            let (m, _) = pre.transform(&s.binned)?;
            if !m.is_complete() {
                return Err(CliError::Numeric(format!("stay {} still has missing values", s.outcome.stay_id)));
            }
            Ok(m)
        })
        .collect()
}

/// Stacks the period rows used for clustering.
pub fn clustering_rows(features: &[&PeriodFeatureMatrix], outcomes: &[&Outcome], all_windows: bool) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = 0;
    for (m, o) in features.iter().zip(outcomes) {
        if !all_windows && !o.event()?.is_discharge() {
            continue;
        }
        cols = m.n_features();
        data.extend_from_slice(m.values.as_slice());
    }
    if data.is_empty() {
        return Err(CliError::data("no periods available for clustering"));
    }
    Ok(Matrix::from_vec(data.len() / cols, cols, data))
}

pub fn fit_states(rows: &Matrix, k: usize, seed: u64, restarts: usize, max_iter: usize) -> Result<(StateModel, KMeansFit)> {
    if rows.rows() < k {
        return Err(CliError::data(format!("{} periods cannot form {k} clusters", rows.rows())));
    }
    let config = KMeansConfig { k, seed, restarts, max_iter };
    Ok(StateModel::fit(rows, &config)?)
}

pub fn label(model: &StateModel, features: &PeriodFeatureMatrix, outcome: &Outcome) -> Result<LabeledTrajectory> {
    let states = features
        .values
        .iter_rows()
        .map(|row| model.assign_raw(row))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledTrajectory {
        stay_id: outcome.stay_id.clone(),
        states,
        terminal_event: outcome.event()?,
        window_days: outcome.window_days,
    })
}

/// A solved policy with the costs it was solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub method: Method,
    pub cost: CostSpec,
    pub solution: Solution,
}

pub fn solve(
    model: &discharge_core::transitions::TransitionModel,
    cost: &CostSpec,
    method: Method,
    tol: f64,
) -> Result<PolicyFile> {
    let solution = match method {
        Method::Pi => mdp::policy_iteration(model, cost, &mdp::default_initial_policy(model.n_states))?,
        Method::Vi => mdp::value_iteration(model, cost, tol)?,
    };
    Ok(PolicyFile { method, cost: cost.clone(), solution })
}

/// Number of states referenced by a set of trajectories.
pub fn infer_states(trajectories: &[LabeledTrajectory]) -> usize {
    trajectories.iter().flat_map(|t| &t.states).map(|s| s.get() as usize).max().unwrap_or(0)
}
