mod common;

use discharge_core::cluster::{kmeans_fit, KMeansConfig};
use discharge_core::ingest::*;
use discharge_core::linalg::Matrix;
use discharge_core::mdp::{self, CostSpec, ValueFunction};
use discharge_core::ope::{bootstrap_bounds, discounted_cp_cost, Evaluator, OpeConfig};
use discharge_core::policies::{decide, PolicyKind, StepContext};
use discharge_core::rng;
use discharge_core::transitions::{LabeledTrajectory, TerminalEvent, TransitionCounts, TransitionModel};
use discharge_core::StateId;
use proptest::prelude::*;

fn column_matrix(cells: &[Option<f64>], f: usize) -> PeriodFeatureMatrix {
    let n = cells.len() / f;
    PeriodFeatureMatrix {
        stay_id: "p".into(),
        period_length_hours: 12.0,
        values: Matrix::from_vec(n, f, cells[..n * f].iter().map(|c| c.unwrap_or(0.0)).collect()),
        missing: cells[..n * f].iter().map(Option::is_none).collect(),
    }
}

fn cells() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.7, -100.0..100.0f64), 3..60)
}

fn model_strategy(max_h: usize) -> impl Strategy<Value = (TransitionModel, CostSpec)> {
    (1..=max_h, any::<u64>()).prop_map(|(h, seed)| {
        let mut r = rng::stream(seed, 0);
        (common::random_model(h, &mut r), common::random_cost(h, &mut r))
    })
}

fn trajectory_strategy(h: u32) -> impl Strategy<Value = LabeledTrajectory> {
    (prop::collection::vec(1..=h, 1..30), any::<bool>(), "[a-z]{1,6}").prop_map(|(ids, ud, id)| {
        let ev = if ud { TerminalEvent::DischargedUd } else { TerminalEvent::DischargedSd };
        LabeledTrajectory::from_ids(id, &ids, ev)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn carry_forward_is_idempotent(c in cells(), f in 1usize..4) {
        prop_assume!(c.len() >= f);
        let m = column_matrix(&c, f);
        let once = carry_forward_impute(&m);
        prop_assert_eq!(carry_forward_impute(&once), once);
    }

    #[test]
    fn caps_stay_within_pool_bounds(pool in prop::collection::vec(-1e3..1e3f64, 2..200), c in cells()) {
        let pools = FeaturePools::from_columns(vec![pool]);
        let (lo, hi) = pools.cap_bounds(0).unwrap();
        let capped = cap_outliers(&pools, &column_matrix(&c, 1)).unwrap();
        for t in 0..capped.matrix.n_periods() {
            if !capped.matrix.is_missing(t, 0) {
                let v = capped.matrix.values[(t, 0)];
                prop_assert!(lo <= v && v <= hi);
            }
        }
    }

    #[test]
    fn binning_ignores_event_order(
        events in prop::collection::vec((0.0..48.0f64, 0usize..3, -50.0..50.0f64), 1..40),
        seed in any::<u64>(),
    ) {
        let schema = FeatureSchema::new(vec![
            FeatureSpec { name: "a".into(), mode: AggregationMode::Mean },
            FeatureSpec { name: "b".into(), mode: AggregationMode::Sum },
            FeatureSpec { name: "c".into(), mode: AggregationMode::ZeroFill },
        ]);
        let names = ["a", "b", "c"];
        let evs: Vec<Event> = events.iter().map(|&(t, j, v)| Event { timestamp_hours: t, feature: names[j].into(), value: v }).collect();
        let mut shuffled = evs.clone();
        let mut r = rng::stream(seed, 0);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng::uniform_index(&mut r, i + 1));
        }
        let a = bin_and_aggregate_periods(&RawEventStream { stay_id: "s".into(), events: evs }, &schema, 12.0, 4).unwrap();
        let b = bin_and_aggregate_periods(&RawEventStream { stay_id: "s".into(), events: shuffled }, &schema, 12.0, 4).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn preprocessing_output_is_finite(c in cells(), f in 1usize..4) {
        prop_assume!(c.len() >= f);
        let m = column_matrix(&c, f);
        let pre = Preprocessor::fit(std::slice::from_ref(&m), f, 3).unwrap();
        let (out, _) = pre.transform(&m).unwrap();
        prop_assert!(out.is_complete());
        prop_assert!(out.values.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn lloyd_never_increases_wcss(n in 5usize..80, k in 1usize..6, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let mut r = rng::stream(seed, 1);
        let data = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng::uniform(&mut r)).collect());
        let cfg = KMeansConfig::new(k, seed);
        let fit = kmeans_fit(&data, &cfg).unwrap();
        for h in &fit.restart_histories {
            for w in h.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
        prop_assert_eq!(kmeans_fit(&data, &cfg).unwrap().centroids, fit.centroids);
    }

    #[test]
    fn estimated_model_is_stochastic(trajs in prop::collection::vec(trajectory_strategy(5), 1..20)) {
        let m = TransitionModel::estimate(5, &trajs).unwrap();
        for row in m.keep_matrix.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        for (u, s) in m.p_ud.iter().zip(&m.p_sd) {
            prop_assert_eq!(u + s, 1.0);
        }
        let counts = TransitionCounts::from_trajectories(5, &trajs).unwrap();
        let visits: usize = trajs.iter().map(LabeledTrajectory::len).sum();
        prop_assert_eq!(counts.total_keep() as usize, visits - trajs.len());
    }

    #[test]
    fn bellman_operator_contracts((model, cost) in model_strategy(8), seed in any::<u64>()) {
        let h = model.n_states;
        let mut r = rng::stream(seed, 2);
        let a = ValueFunction::new((0..h).map(|_| 50.0 * rng::uniform(&mut r)).collect(), &cost);
        let b = ValueFunction::new((0..h).map(|_| 50.0 * rng::uniform(&mut r)).collect(), &cost);
        let (ta, _) = mdp::bellman_backup(&a, &model, &cost).unwrap();
        let (tb, _) = mdp::bellman_backup(&b, &model, &cost).unwrap();
        prop_assert!(ta.sup_distance(&tb) <= cost.alpha * a.sup_distance(&b) + 1e-12);
    }

    #[test]
    fn optimal_value_grows_with_penalty((model, cost) in model_strategy(8), extra in 0.0..5.0f64) {
        let h = model.n_states;
        let lo = mdp::policy_iteration(&model, &cost, &mdp::default_initial_policy(h)).unwrap();
        let hi_cost = cost.with_g_ud(cost.g_ud + extra);
        let hi = mdp::policy_iteration(&model, &hi_cost, &mdp::default_initial_policy(h)).unwrap();
        for (a, b) in hi.value.states.iter().zip(&lo.value.states) {
            prop_assert!(*a >= b - 1e-12);
        }
        prop_assert!(mdp::bellman_residual(&lo.value, &model, &cost).unwrap() <= 1e-9);
    }

    #[test]
    fn policy_iteration_is_optimal((model, cost) in model_strategy(6)) {
        let h = model.n_states;
        let pi = mdp::policy_iteration(&model, &cost, &mdp::default_initial_policy(h)).unwrap();
        let (p, j, _) = common::brute_force(&model, &cost);
        prop_assert_eq!(pi.policy, p);
        prop_assert!(common::sup(&pi.value.states, &j) <= 1e-9);
    }

    #[test]
    fn bootstrap_interval_is_ordered(costs in prop::collection::vec(-10.0..10.0f64, 1..60), seed in any::<u64>(), b in 1usize..200) {
        let e = bootstrap_bounds(&costs, b, 0.95, seed).unwrap();
        prop_assert!(e.lower_bound <= e.mean_cost && e.mean_cost <= e.upper_bound);
        prop_assert_eq!(bootstrap_bounds(&costs, b, 0.95, seed).unwrap(), e);
    }

    #[test]
    fn clinician_replay_is_exact(t in trajectory_strategy(4), seed in any::<u64>()) {
        let mut r = rng::stream(seed, 3);
        let model = common::random_model(4, &mut r);
        let cost = common::random_cost(4, &mut r);
        let ev = Evaluator::new(&model, &cost, OpeConfig::default()).unwrap();
        prop_assert_eq!(ev.trajectory_cost(&t, &PolicyKind::Clinician).unwrap().cost, discounted_cp_cost(&t, &cost).unwrap());
    }

    #[test]
    fn optimal_policy_is_stationary((model, cost) in model_strategy(6), step in 0usize..500, recorded in 1usize..50) {
        let h = model.n_states;
        let sol = mdp::policy_iteration(&model, &cost, &mdp::default_initial_policy(h)).unwrap();
        let kind = PolicyKind::Optimal { policy: sol.policy.clone() };
        let mut r = rng::stream(0, 0);
        for x in 0..h {
            let a = decide(&kind, StateId::from_index(x), StepContext { step, recorded }, &mut r).unwrap();
            prop_assert_eq!(a, sol.policy.actions[x]);
        }
    }
}
