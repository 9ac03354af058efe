mod common;

use discharge_core::linalg::Matrix;
use discharge_core::mdp::{self, Action, CostSpec, Policy};
use discharge_core::ope::*;
use discharge_core::policies::PolicyKind;
use discharge_core::synth::{gradient, sample_cohort, CohortOptions, GradientConfig, GroundTruthModel};
use discharge_core::transitions::TransitionModel;

fn three_state_truth() -> GroundTruthModel {
    GroundTruthModel {
        n_states: 3,
        keep_matrix: Matrix::from_rows(&[vec![0.9, 0.1, 0.0], vec![0.3, 0.6, 0.1], vec![0.0, 0.3, 0.7]]),
        p_ud: vec![0.02, 0.2, 0.6],
        discharge_prob: vec![0.05; 3],
        initial_dist: vec![0.0, 0.0, 1.0],
        feature_means: Matrix::zeros(3, 1),
        feature_scale: vec![0.0],
        seed: 0,
    }
}

fn fast_config(seed: u64) -> OpeConfig {
    OpeConfig { n_mc_sims: 20, seed, ..OpeConfig::default() }
}

fn mean_op_cost(truth: &GroundTruthModel, cost: &CostSpec, n: usize, seed: u64) -> (f64, Vec<f64>) {
    let model = truth.transition_model();
    let sol = mdp::policy_iteration(&model, cost, &mdp::default_initial_policy(truth.n_states)).unwrap();
    let opts = CohortOptions { max_periods: 5000, ..CohortOptions::default() };
    let cohort = discharged_only(&sample_cohort(truth, n, seed, opts).unwrap());
    assert_eq!(cohort.len(), n);
    let ev = Evaluator::new(&model, cost, fast_config(seed)).unwrap();
    let costs: Vec<f64> = ev.costs(&cohort, &optimal(&sol.policy)).unwrap().iter().map(|c| c.cost).collect();
    (costs.iter().sum::<f64>() / n as f64, sol.value.states)
}

#[test]
fn three_state_chain_converges_to_exact_value() {
    let truth = three_state_truth();
    let cost = CostSpec::standard(3, 3.0);
    let (mean, j) = mean_op_cost(&truth, &cost, 10_000, 31);
    let exact = common::exact_value(
        &mdp::policy_iteration(&truth.transition_model(), &cost, &mdp::default_initial_policy(3)).unwrap().policy,
        &truth.transition_model(),
        &cost,
    );
    assert!((j[2] - exact[2]).abs() < 1e-9);
    assert!((mean - exact[2]).abs() <= 0.01 * exact[2], "{mean} vs {}", exact[2]);
}

#[test]
fn gradient_cohort_converges_to_initial_average() {
    let truth = gradient(&GradientConfig { n_states: 6, seed: 2, ..GradientConfig::default() }).unwrap();
    let cost = CostSpec::standard(6, 3.0);
    let (mean, j) = mean_op_cost(&truth, &cost, 10_000, 32);
    let target = truth.expected_initial_value(&j);
    assert!((mean - target).abs() <= 0.02 * target, "{mean} vs {target}");
}

#[test]
fn balanced_binary_costs() {
    let est = |n: usize| {
        let costs: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        bootstrap_bounds(&costs, 4000, 0.95, 7).unwrap()
    };
    let small = est(100);
    let large = est(2000);
    for (e, n) in [(small, 100.0), (large, 2000.0)] {
        assert!(e.lower_bound < 0.5 && e.upper_bound > 0.5);
        let normal_width = 2.0 * 1.959964 * (0.25f64 / n).sqrt();
        let width = e.upper_bound - e.lower_bound;
        assert!((width - normal_width).abs() <= 0.15 * normal_width, "{width} vs {normal_width}");
    }
    assert!(large.upper_bound - large.lower_bound < small.upper_bound - small.lower_bound);
}

#[test]
fn zero_penalty_curve_discharges_at_admission() {
    let truth = gradient(&GradientConfig { seed: 4, ..GradientConfig::default() }).unwrap();
    let test = discharged_only(&sample_cohort(&truth, 400, 3, CohortOptions::default()).unwrap());
    let model = TransitionModel::estimate(truth.n_states, &test).unwrap();
    let curve = performance_curves(&model, &model, &CostSpec::standard(truth.n_states, 0.0), &[0.0], &test, fast_config(1)).unwrap();
    assert_eq!(curve[0].op_n_discharged, test.len());
    assert_eq!(curve[0].op_mean_los_days, 0.5);
    assert_eq!(curve[0].rp2_gamma, 0.0);
}

#[test]
fn single_state_curve_threshold() {
    // keep value 1/(1-a) = 20; discharge value a g p / (1-a) = 19 g
    let model = TransitionModel::new(Matrix::identity(1), vec![1.0]).unwrap();
    let test: Vec<_> = (0..10)
        .map(|i| discharge_core::transitions::LabeledTrajectory::from_ids(format!("s{i}"), &[1, 1], discharge_core::transitions::TerminalEvent::DischargedUd))
        .collect();
    let grid = [0.5, 1.0, 20.0 / 19.0 - 1e-6, 20.0 / 19.0 + 1e-6, 2.0];
    let cfg = OpeConfig { n_mc_sims: 2, horizon_cap: 30, ..OpeConfig::default() };
    let curve = performance_curves(&model, &model, &CostSpec::standard(1, 0.0), &grid, &test, cfg).unwrap();
    let discharged: Vec<usize> = curve.iter().map(|c| c.op_n_discharged).collect();
    assert_eq!(discharged, vec![10, 10, 10, 0, 0]);
    assert_eq!(curve[0].op_frac_ud, Some(1.0));
    assert_eq!(curve[4].op_frac_ud, None);
}

#[test]
fn calibration_trends_with_severity() {
    let truth = gradient(&GradientConfig { seed: 6, ..GradientConfig::default() }).unwrap();
    let test = discharged_only(&sample_cohort(&truth, 3000, 8, CohortOptions::default()).unwrap());
    let rows = policy_calibration(&test, &CostSpec::standard(truth.n_states, 3.0)).unwrap();
    assert!(rows.len() > 2);
    let c: Vec<f64> = rows.iter().map(|r| r.mean_cost).collect();
    let u: Vec<f64> = rows.iter().map(|r| r.ud_rate).collect();
    assert!(common::spearman(&c, &u) > 0.0);
    assert_eq!(rows.iter().map(|r| r.n).sum::<usize>(), test.len());
}

#[test]
fn clinician_replay_is_exact_on_cohort() {
    let truth = gradient(&GradientConfig::default()).unwrap();
    let model = truth.transition_model();
    let cost = CostSpec::standard(truth.n_states, 2.5);
    let test = discharged_only(&sample_cohort(&truth, 500, 9, CohortOptions::default()).unwrap());
    let ev = Evaluator::new(&model, &cost, OpeConfig::default()).unwrap();
    for t in &test {
        assert_eq!(ev.trajectory_cost(t, &PolicyKind::Clinician).unwrap().cost, discounted_cp_cost(t, &cost).unwrap());
    }
}

#[test]
fn keep_everywhere_uses_tail() {
    let truth = three_state_truth();
    let model = truth.transition_model();
    let cost = CostSpec::standard(3, 3.0);
    let t = discharge_core::transitions::LabeledTrajectory::from_ids("x", &[3], discharge_core::transitions::TerminalEvent::DischargedSd);
    let kind = optimal(&Policy::uniform(3, Action::Keep));
    let c = trajectory_cost(&t, &kind, &model, &cost, OpeConfig { n_mc_sims: 4, horizon_cap: 100, ..OpeConfig::default() }).unwrap();
    assert!(c.horizon_capped);
    assert!((c.cost - 20.0).abs() < 1e-9);
}
