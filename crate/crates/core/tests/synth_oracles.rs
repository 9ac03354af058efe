mod common;

use discharge_core::cluster::{KMeansConfig, StateModel};
use discharge_core::ingest::{bin_and_aggregate_periods, Preprocessor, DEFAULT_IMPUTE_ROUNDS};
use discharge_core::linalg::Matrix;
use discharge_core::mdp::{self, Action, CostSpec, Policy};
use discharge_core::rng;
use discharge_core::synth::*;
use discharge_core::transitions::{estimate_keep_matrix, LabeledTrajectory, TerminalEvent, TransitionModel};
use discharge_core::StateId;

#[test]
fn zero_risk_means_all_safe() {
    let mut truth = gradient(&GradientConfig::default()).unwrap();
    truth.p_ud = vec![0.0; truth.n_states];
    let cohort = sample_cohort(&truth, 500, 2, CohortOptions::default()).unwrap();
    assert!(cohort.iter().all(|t| t.terminal_event == TerminalEvent::DischargedSd));
}

#[test]
fn re_estimation_recovers_keep_rows() {
    let mut r = rng::stream(40, 0);
    let truth = common::chain_truth(common::random_keep(10, &mut r), 0.02, &mut r);
    let cohort = sample_cohort(&truth, 2500, 3, CohortOptions { max_periods: 1000, window_days: 30 }).unwrap();
    let transitions: usize = cohort.iter().map(|t| t.len() - 1).sum();
    assert!(transitions >= 100_000, "{transitions}");
    let est = estimate_keep_matrix(10, &cohort).unwrap();
    assert!(common::max_row_l1(&est, &truth.keep_matrix) <= 0.05);
}

#[test]
fn cohort_files_are_reproducible() {
    let truth = gradient(&GradientConfig { seed: 8, ..GradientConfig::default() }).unwrap();
    let emit = EmitOptions::uniform(truth.n_features(), 12.0, 0.2);
    let run = || {
        let cohort = sample_cohort(&truth, 40, 5, CohortOptions::default()).unwrap();
        let streams: Vec<_> = cohort.iter().map(|t| emit_features(t, &truth, 5, &emit).unwrap()).collect();
        format!("{cohort:?}{streams:?}")
    };
    assert_eq!(run(), run());
}

struct Processed {
    rows: Matrix,
    truth: Vec<usize>,
    per_stay: Vec<usize>,
}

fn ingest(truth: &GroundTruthModel, cohort: &[LabeledTrajectory], emit: &EmitOptions, seed: u64) -> Processed {
    let schema = truth.schema();
    let binned: Vec<_> = cohort
        .iter()
        .map(|t| {
            let raw = emit_features(t, truth, seed, emit).unwrap();
            bin_and_aggregate_periods(&raw, &schema, emit.period_hours, t.len()).unwrap()
        })
        .collect();
    let pre = Preprocessor::fit(&binned, schema.len(), DEFAULT_IMPUTE_ROUNDS).unwrap();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut per_stay = Vec::new();
    for (t, b) in cohort.iter().zip(&binned) {
        let (m, _) = pre.transform(b).unwrap();
        data.extend_from_slice(m.values.as_slice());
        labels.extend(t.states.iter().map(|s| s.index()));
        per_stay.push(t.len());
    }
    Processed { rows: Matrix::from_vec(labels.len(), schema.len(), data), truth: labels, per_stay }
}

#[test]
fn zero_noise_clusters_are_pure() {
    let truth = gradient(&GradientConfig { n_states: 6, noise: 0.0, seed: 12, ..GradientConfig::default() }).unwrap();
    let cohort = sample_cohort(&truth, 300, 4, CohortOptions::default()).unwrap();
    let p = ingest(&truth, &cohort, &EmitOptions::uniform(truth.n_features(), 12.0, 0.0), 4);
    let (_, fit) = StateModel::fit(&p.rows, &KMeansConfig::new(6, 1)).unwrap();
    assert_eq!(common::purity(&p.truth, &fit.labels, 6), 1.0);
    for h in &fit.restart_histories {
        assert!(h.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn end_to_end_policy_near_optimal() {
    let h = 6;
    let truth = gradient(&GradientConfig { n_states: h, separation: 6.0, seed: 13, ..GradientConfig::default() }).unwrap();
    let cohort = sample_cohort(&truth, 5000, 6, CohortOptions::default()).unwrap();
    let p = ingest(&truth, &cohort, &EmitOptions::uniform(truth.n_features(), 12.0, 0.1), 6);
    let (_, fit) = StateModel::fit(&p.rows, &KMeansConfig::new(h, 2)).unwrap();

    let mut offset = 0;
    let learned: Vec<LabeledTrajectory> = cohort
        .iter()
        .zip(&p.per_stay)
        .map(|(t, &len)| {
            let states = fit.labels[offset..offset + len].iter().map(|&c| StateId::from_index(c)).collect();
            offset += len;
            LabeledTrajectory { states, ..t.clone() }
        })
        .collect();
    let model = TransitionModel::estimate(h, &learned).unwrap();
    let cost = CostSpec::standard(h, 3.0);
    let learned_policy = mdp::policy_iteration(&model, &cost, &mdp::default_initial_policy(h)).unwrap().policy;

    // each true state acts as its majority cluster
    let mut votes = vec![vec![0usize; h]; h];
    for (&t, &c) in p.truth.iter().zip(&fit.labels) {
        votes[t][c] += 1;
    }
    let mapped = Policy {
        actions: (0..h)
            .map(|x| {
                let c = (0..h).max_by_key(|&c| votes[x][c]).unwrap();
                learned_policy.actions[c]
            })
            .collect(),
    };
    let true_model = truth.transition_model();
    let achieved = truth.expected_initial_value(&common::exact_value(&mapped, &true_model, &cost));
    let (best, _, _) = common::brute_force(&true_model, &cost);
    let optimal = truth.expected_initial_value(&common::exact_value(&best, &true_model, &cost));
    assert!(achieved <= optimal * 1.05 + 1e-12, "{achieved} vs {optimal}");
    assert!(mapped.actions.contains(&Action::Discharge));
}
