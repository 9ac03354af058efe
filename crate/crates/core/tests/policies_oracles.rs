use discharge_core::mdp::{self, CostSpec};
use discharge_core::ope::discharged_only;
use discharge_core::policies::*;
use discharge_core::synth::{gradient, sample_cohort, CohortOptions, GradientConfig};

#[test]
fn rp2_matches_op_discharge_count() {
    let truth = gradient(&GradientConfig { seed: 5, ..GradientConfig::default() }).unwrap();
    let model = truth.transition_model();
    let cost = CostSpec::standard(truth.n_states, 2.0);
    let op = mdp::policy_iteration(&model, &cost, &mdp::default_initial_policy(truth.n_states)).unwrap().policy;
    let test = discharged_only(&sample_cohort(&truth, 3000, 17, CohortOptions::default()).unwrap());
    assert!(test.len() >= 1000);
    let gamma = match_rp2_gamma_for(&op, &test).unwrap();
    assert!(gamma > 0.0 && gamma < 1.0, "{gamma}");
    let op_count = test.iter().filter(|t| !op_defers(&op, t)).count() as f64;
    let rp2 = PolicyKind::pseudo_random(gamma, 99).unwrap();
    let rp2_count = test
        .iter()
        .filter(|t| apply_to_trajectory(&rp2, t).unwrap().discharge_step.is_some())
        .count() as f64;
    let n = test.len() as f64;
    let sigma = (n * gamma * (1.0 - gamma)).sqrt();
    assert!((rp2_count - op_count).abs() <= 2.0 * sigma, "{rp2_count} vs {op_count} (sigma {sigma})");
}

#[test]
fn policies_are_deterministic_in_seed() {
    let truth = gradient(&GradientConfig::default()).unwrap();
    let test = discharged_only(&sample_cohort(&truth, 200, 1, CohortOptions::default()).unwrap());
    for kind in [PolicyKind::Random { seed: 4 }, PolicyKind::pseudo_random(0.4, 4).unwrap()] {
        let a: Vec<_> = test.iter().map(|t| apply_to_trajectory(&kind, t).unwrap()).collect();
        let b: Vec<_> = test.iter().map(|t| apply_to_trajectory(&kind, t).unwrap()).collect();
        assert_eq!(a, b);
    }
}
