use discharge_core::ingest::*;
use discharge_core::linalg::Matrix;

/// Textbook linear-interpolation percentile over the sorted pool.
fn brute_percentile(pool: &[f64], q: f64) -> f64 {
    let mut v = pool.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (rank - lo as f64) * (v[hi] - v[lo])
}

fn single(values: &[f64]) -> PeriodFeatureMatrix {
    PeriodFeatureMatrix {
        stay_id: "s".into(),
        period_length_hours: 12.0,
        values: Matrix::from_vec(values.len(), 1, values.to_vec()),
        missing: vec![false; values.len()],
    }
}

#[test]
fn caps_match_brute_force_percentiles() {
    let pool: Vec<f64> = (0..1000).map(f64::from).collect();
    let pools = FeaturePools::from_columns(vec![pool.clone()]);
    let capped = cap_outliers(&pools, &single(&[2000.0, -5.0, 500.0])).unwrap().matrix;
    assert!((capped.values[(0, 0)] - brute_percentile(&pool, 99.9)).abs() < 1e-12);
    assert!((capped.values[(1, 0)] - brute_percentile(&pool, 0.1)).abs() < 1e-12);
    assert!((capped.values[(0, 0)] - 998.001).abs() < 1e-9);
    assert_eq!(capped.values[(2, 0)], 500.0);
}

#[test]
fn linear_feature_imputed_by_least_squares() {
    // column 1 = 2 * column 0 on every observed row; row 3 misses column 1
    let xs = [1.0, 2.0, 3.0, 4.5, 5.0, 7.0];
    let mut values = Vec::new();
    for x in xs {
        values.extend([x, 2.0 * x]);
    }
    let mut missing = vec![false; 12];
    missing[3 * 2 + 1] = true;
    values[3 * 2 + 1] = 0.0;
    let m = PeriodFeatureMatrix { stay_id: "s".into(), period_length_hours: 12.0, values: Matrix::from_vec(6, 2, values), missing };
    let out = regression_impute(&m, DEFAULT_IMPUTE_ROUNDS, &[0.0, 0.0]).unwrap();
    assert!((out.values[(3, 1)] - 9.0).abs() < 1e-6, "{}", out.values[(3, 1)]);
    assert!(out.is_complete());
}

#[test]
fn zero_fill_feature_without_events() {
    let schema = FeatureSchema::new(vec![
        FeatureSpec { name: "hr".into(), mode: AggregationMode::Mean },
        FeatureSpec { name: "vaso".into(), mode: AggregationMode::ZeroFill },
    ]);
    let stream = RawEventStream {
        stay_id: "s".into(),
        events: vec![
            Event { timestamp_hours: 1.0, feature: "hr".into(), value: 80.0 },
            Event { timestamp_hours: 30.0, feature: "hr".into(), value: 90.0 },
        ],
    };
    let m = bin_and_aggregate(&stream, &schema, 12.0).unwrap();
    assert_eq!(m.n_periods(), 3);
    for t in 0..3 {
        assert_eq!(m.values[(t, 1)], 0.0);
        assert!(!m.is_missing(t, 1));
    }
    assert!(m.is_missing(1, 0));
}

#[test]
fn pipeline_output_is_finite() {
    let schema = FeatureSchema::new(vec![
        FeatureSpec { name: "a".into(), mode: AggregationMode::Mean },
        FeatureSpec { name: "b".into(), mode: AggregationMode::Sum },
        FeatureSpec { name: "c".into(), mode: AggregationMode::Mean },
    ]);
    let mut events = Vec::new();
    for t in 0..20 {
        let h = t as f64 * 6.0 + 0.5;
        if t % 3 != 0 {
            events.push(Event { timestamp_hours: h, feature: "a".into(), value: (t * 7 % 11) as f64 });
        }
        if t % 4 == 0 {
            events.push(Event { timestamp_hours: h, feature: "b".into(), value: 1.5 });
        }
    }
    let stream = RawEventStream { stay_id: "s".into(), events };
    let binned = bin_and_aggregate_periods(&stream, &schema, 12.0, 12).unwrap();
    let pools = FeaturePools::from_matrices(3, [&binned]);
    let (out, uncapped) = preprocess(&binned, &pools, DEFAULT_IMPUTE_ROUNDS).unwrap();
    assert_eq!(uncapped, vec![2]);
    assert!(out.values.as_slice().iter().all(|v| v.is_finite()));
    assert!(out.is_complete());
}
