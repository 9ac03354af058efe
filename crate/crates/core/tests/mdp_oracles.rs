mod common;

use discharge_core::linalg::Matrix;
use discharge_core::mdp::*;
use discharge_core::rng;
use discharge_core::transitions::TransitionModel;

fn self_loop(p_ud: f64) -> TransitionModel {
    TransitionModel::new(Matrix::identity(1), vec![p_ud]).unwrap()
}

#[test]
fn single_state_threshold() {
    let model = self_loop(1.0);
    let cost = CostSpec::standard(1, 3.0);
    let q = q_values(&ValueFunction::new(vec![20.0], &cost), &model, &cost);
    // keep: 1 + 0.95 * 20; discharge: 0.95 * 3 / 0.05
    assert!((q[0].0 - 20.0).abs() < 1e-12);
    assert!((q[0].1 - 57.0).abs() < 1e-12);
    let sol = policy_iteration(&model, &cost, &default_initial_policy(1)).unwrap();
    assert_eq!(sol.policy.actions, vec![Action::Keep]);
    assert!((sol.value.states[0] - 20.0).abs() < 1e-9);
    assert!(sol.iterations <= 2);
    let keep = Policy::uniform(1, Action::Keep);
    assert!((policy_evaluation(&keep, &model, &cost).unwrap().states[0] - 1.0 / 0.05).abs() < 1e-12);
    let (best, _) = enumerate_policies(&model, &cost).unwrap();
    assert_eq!(best, sol.policy);
}

#[test]
fn evaluation_matches_repeated_backups() {
    let mut r = rng::stream(21, 0);
    let model = common::random_model(4, &mut r);
    let cost = common::random_cost(4, &mut r);
    let mu = Policy { actions: vec![Action::Keep, Action::Discharge, Action::Keep, Action::Keep] };
    let exact = policy_evaluation(&mu, &model, &cost).unwrap();
    let mut j = ValueFunction::zeros(4, &cost);
    for _ in 0..10_000 {
        j = policy_backup(&j, &mu, &model, &cost);
    }
    assert!(common::sup(&exact.states, &j.states) < 1e-6);
    assert!(common::sup(&exact.states, &common::exact_value(&mu, &model, &cost)) < 1e-9);
}

#[test]
fn solvers_match_brute_force() {
    let mut r = rng::stream(22, 0);
    for h in 1..=8 {
        for _ in 0..5 {
            let model = common::random_model(h, &mut r);
            let cost = common::random_cost(h, &mut r);
            let (policy, j, pointwise) = common::brute_force(&model, &cost);
            let pi = policy_iteration(&model, &cost, &default_initial_policy(h)).unwrap();
            assert_eq!(pi.policy, policy);
            assert!(common::sup(&pi.value.states, &j) < 1e-9);
            assert!(common::sup(&pi.value.states, &pointwise) < 1e-9);
            let (en, en_j) = enumerate_policies(&model, &cost).unwrap();
            assert_eq!(en, policy);
            assert!(common::sup(&en_j.states, &pointwise) < 1e-9);
            let vi = value_iteration(&model, &cost, 1e-9).unwrap();
            assert!(common::sup(&vi.value.states, &j) < 1e-6);
        }
    }
}

#[test]
fn zero_penalty_discharges_everywhere() {
    let mut r = rng::stream(23, 0);
    for h in [1, 3, 10, 40] {
        let model = common::random_model(h, &mut r);
        let cost = CostSpec::standard(h, 0.0);
        let sol = policy_iteration(&model, &cost, &Policy::uniform(h, Action::Keep)).unwrap();
        assert_eq!(sol.policy, Policy::uniform(h, Action::Discharge));
        assert!(sol.value.states.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn absorbing_values_exact() {
    let cost = CostSpec { g_sd: -2.0, ..CostSpec::standard(2, 3.0) };
    let j = ValueFunction::zeros(2, &cost);
    assert_eq!(j.sd, -2.0 / (1.0 - 0.95));
    assert_eq!(j.ud, 3.0 / (1.0 - 0.95));
}

#[test]
fn improvement_is_monotone() {
    let mut r = rng::stream(24, 0);
    for _ in 0..20 {
        let model = common::random_model(8, &mut r);
        let cost = common::random_cost(8, &mut r);
        let trace = policy_iteration_trace(&model, &cost, &default_initial_policy(8)).unwrap();
        for w in trace.evaluations.windows(2) {
            for (next, prev) in w[1].states.iter().zip(&w[0].states) {
                assert!(*next <= prev + 1e-12);
            }
        }
    }
}
