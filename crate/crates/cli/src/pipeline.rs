//! The full experiment: ingest (or simulate), then per split cluster,
//! estimate, solve and evaluate; finally aggregate across splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use discharge_core::cluster::StateModel;
use discharge_core::ope::{self, CalibrationRow, CurvePoint, Evaluator, PolicyEvaluation};
use discharge_core::policies::PolicyKind;
use discharge_core::rng;
use discharge_core::transitions::{self, LabeledTrajectory, R2Triple, TransitionModel};

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, num, opt, Audit, Table};
use crate::manifest::Manifest;
use crate::stages::{self, Cohort, PolicyFile, Stay};

/// Everything one train/test split produces.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub index: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub wcss: f64,
    pub state_model: StateModel,
    pub train_model: TransitionModel,
    pub r2: R2Triple,
    pub policy: PolicyFile,
    pub test_discharged: usize,
    pub evaluations: Vec<PolicyEvaluation>,
    pub curves: Vec<CurvePoint>,
    pub calibration: Vec<CalibrationRow>,
}

pub fn split_seed(seed: u64, index: usize) -> u64 {
    rng::derive_seed(seed, 100 + index as u64)
}

/// Loads file inputs or simulates a cohort, per the configuration.
pub fn load_cohort(cfg: &RunConfig) -> Result<(Cohort, Option<stages::Simulated>)> {
    match cfg.data.source {
        DataSource::Files => {
            let path = |p: &Option<std::path::PathBuf>| p.clone().expect("validated");
            let cohort = Cohort {
                schema: formats::read_schema(&path(&cfg.data.schema))?,
                streams: formats::read_events(&path(&cfg.data.events))?,
                outcomes: formats::read_outcomes(&path(&cfg.data.outcomes))?,
            };
            Ok((cohort, None))
        }
        DataSource::Synthetic => {
            let sim = stages::simulate(&cfg.synthetic, cfg.ingest.period_hours, cfg.mdp.window_days, cfg.seed)?;
            Ok((sim.cohort.clone(), Some(sim)))
        }
    }
}

pub fn run_split(cfg: &RunConfig, stays: &[Stay], n_features: usize, index: usize) -> Result<SplitResult> {
    let seed = split_seed(cfg.seed, index);
    let n = stays.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let n_train = ((n as f64 * cfg.experiment.train_fraction).round() as usize).clamp(1, n - 1);
    let (mut train_idx, mut test_idx) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let train: Vec<&Stay> = train_idx.iter().map(|&i| &stays[i]).collect();
    let features = stages::preprocess(&train, stays, n_features, cfg.ingest.impute_rounds)?;
    let rows = stages::clustering_rows(
        &train_idx.iter().map(|&i| &features[i]).collect::<Vec<_>>(),
        &train.iter().map(|s| &s.outcome).collect::<Vec<_>>(),
        cfg.cluster.all_windows,
    )?;
    let k = cfg.cluster.k;
    let (state_model, fit) =
        stages::fit_states(&rows, k, rng::derive_seed(seed, 1), cfg.cluster.restarts, cfg.cluster.max_iter)?;
    let trajectories = stays
        .iter()
        .zip(&features)
        .map(|(s, f)| stages::label(&state_model, f, &s.outcome))
        .collect::<Result<Vec<_>>>()?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| trajectories[i].clone()).collect::<Vec<LabeledTrajectory>>();
    let (train_trajs, test_trajs) = (pick(&train_idx), pick(&test_idx));

    let train_model = TransitionModel::estimate(k, &train_trajs)?;
    let test_model = TransitionModel::estimate(k, &test_trajs)?;
    let r2 = transitions::validate_r2(&train_model, &test_trajs)?;

    let cost = cfg.mdp.cost(k);
    let policy = stages::solve(&train_model, &cost, cfg.mdp.method, cfg.mdp.vi_tolerance)?;

    let test = ope::discharged_only(&test_trajs);
    if test.is_empty() {
        return Err(CliError::data(format!("split {index}: no discharged stays in the test set")));
    }
    let ope_cfg = cfg.ope.to_core(rng::derive_seed(seed, 2), cfg.ingest.period_hours);
    let evaluator = Evaluator::new(&test_model, &cost, ope_cfg)?;
    let kinds = [ope::optimal(&policy.solution.policy), PolicyKind::Clinician];
    let evaluations = ope::evaluate_policies(&evaluator, &test, &kinds)?;
    let curves = ope::performance_curves(&train_model, &test_model, &cost, &cfg.experiment.gud_grid, &test, ope_cfg)?;
    let calibration = ope::policy_calibration(&test, &cost)?;

    Ok(SplitResult {
        index,
        seed,
        n_train,
        n_test: test_idx.len(),
        wcss: fit.wcss,
        state_model,
        train_model,
        r2,
        policy,
        test_discharged: test.len(),
        evaluations,
        curves,
        calibration,
    })
}

pub const SPLIT_HEADER: [&str; 20] = [
    "split",
    "split_seed",
    "n_train",
    "n_test",
    "n_test_discharged",
    "wcss",
    "r2_keep",
    "r2_sd",
    "r2_ud",
    "op_discharge_states",
    "op_mean_cost",
    "op_lower",
    "op_upper",
    "cp_mean_cost",
    "cp_lower",
    "cp_upper",
    "op_simulated",
    "op_horizon_capped",
    "pi_iterations",
    "op_minus_cp",
];

pub fn split_row(r: &SplitResult) -> Vec<String> {
    let (op, cp) = (&r.evaluations[0], &r.evaluations[1]);
    vec![
        r.index.to_string(),
        r.seed.to_string(),
        r.n_train.to_string(),
        r.n_test.to_string(),
        r.test_discharged.to_string(),
        num(r.wcss),
        num(r.r2.keep),
        num(r.r2.sd),
        num(r.r2.ud),
        r.policy.solution.policy.discharge_count().to_string(),
        num(op.estimate.mean_cost),
        num(op.estimate.lower_bound),
        num(op.estimate.upper_bound),
        num(cp.estimate.mean_cost),
        num(cp.estimate.lower_bound),
        num(cp.estimate.upper_bound),
        op.simulated.to_string(),
        op.horizon_capped.to_string(),
        r.policy.solution.iterations.to_string(),
        num(op.estimate.mean_cost - cp.estimate.mean_cost),
    ]
}

pub const CURVE_HEADER: [&str; 15] = [
    "g_ud",
    "n_stays",
    "op_discharge_states",
    "op_n_discharged",
    "op_frac_ud",
    "op_frac_ud_se",
    "op_mean_los_days",
    "rp2_gamma",
    "rp2_n_discharged",
    "rp2_frac_ud",
    "rp2_frac_ud_se",
    "cp_n_discharged",
    "cp_frac_ud",
    "cp_mean_los_days",
    "op_minus_rp2_frac_ud",
];

pub fn curve_row(p: &CurvePoint) -> Vec<String> {
    let gap = match (p.op_frac_ud, p.rp2_frac_ud) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    vec![
        num(p.g_ud),
        p.n_stays.to_string(),
        p.op_discharge_states.to_string(),
        p.op_n_discharged.to_string(),
        opt(p.op_frac_ud),
        opt(p.op_frac_ud_se),
        num(p.op_mean_los_days),
        num(p.rp2_gamma),
        p.rp2_n_discharged.to_string(),
        opt(p.rp2_frac_ud),
        opt(p.rp2_frac_ud_se),
        p.cp_n_discharged.to_string(),
        opt(p.cp_frac_ud),
        num(p.cp_mean_los_days),
        opt(gap),
    ]
}

pub const CALIBRATION_HEADER: [&str; 6] = ["bucket", "n", "cost_min", "cost_max", "mean_cost", "ud_rate"];

pub fn calibration_row(c: &CalibrationRow) -> Vec<String> {
    vec![c.bucket.to_string(), c.n.to_string(), num(c.cost_min), num(c.cost_max), num(c.mean_cost), num(c.ud_rate)]
}

fn with_split(index: usize, mut row: Vec<String>) -> Vec<String> {
    row.insert(0, index.to_string());
    row
}

fn prefixed<const N: usize>(first: &str, rest: [&str; N]) -> Vec<String> {
    std::iter::once(first).chain(rest).map(String::from).collect()
}

/// Output of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub manifest_hash: String,
    pub splits: Vec<SplitResult>,
}

/// Runs every split with at most `jobs` worker threads (0 = all cores) and
/// writes tables, models and the manifest under `out`. Results do not depend
/// on `jobs`.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<RunOutcome> {
    cfg.validate()?;
    let (cohort, simulated) = load_cohort(cfg)?;
    let (stays, excluded) = stages::bin_stays(&cohort, &cfg.ingest)?;
    if stays.len() < 2 {
        return Err(CliError::data(format!("{} stays pass the inclusion rule; need at least 2", stays.len())));
    }
    let n_features = cohort.schema.len();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("cannot start {jobs} workers: {e}")))?;
    let splits: Vec<SplitResult> = pool.install(|| {
        (0..cfg.experiment.n_splits)
            .into_par_iter()
            .map(|i| run_split(cfg, &stays, n_features, i))
            .collect::<Result<Vec<_>>>()
    })?;

    let audit = Audit { seed: cfg.seed, config_hash: cfg.hash() };
    let mut written: Vec<String> = Vec::new();
    let mut put = |rel: &str| -> std::path::PathBuf {
        written.push(rel.to_string());
        out.join(rel)
    };

    formats::write_json(&put("config.json"), cfg)?;
    if let Some(sim) = &simulated {
        formats::write_json(&put("synthetic/truth.json"), &sim.truth)?;
        formats::write_trajectories(&put("synthetic/true_trajectories.jsonl"), &sim.trajectories)?;
    }

    let mut split_table = Table::new(&SPLIT_HEADER);
    let mut curves = Table { header: prefixed("split", CURVE_HEADER), rows: Vec::new() };
    let mut calibration = Table { header: prefixed("split", CALIBRATION_HEADER), rows: Vec::new() };
    for r in &splits {
        split_table.push(split_row(r));
        curves.rows.extend(r.curves.iter().map(|p| with_split(r.index, curve_row(p))));
        calibration.rows.extend(r.calibration.iter().map(|c| with_split(r.index, calibration_row(c))));
        let dir = format!("models/split-{:03}", r.index);
        formats::write_json(&put(&format!("{dir}/state_model.json")), &r.state_model)?;
        formats::write_json(&put(&format!("{dir}/transition_model.json")), &r.train_model)?;
        formats::write_json(&put(&format!("{dir}/policy.json")), &r.policy)?;
    }
    split_table.write(&put("splits.csv"), &audit)?;
    curves.write(&put("curves.csv"), &audit)?;
    calibration.write(&put("calibration.csv"), &audit)?;

    let op_boot: Vec<Vec<f64>> = splits.iter().map(|r| r.evaluations[0].boot_means.clone()).collect();
    let cp_boot: Vec<Vec<f64>> = splits.iter().map(|r| r.evaluations[1].boot_means.clone()).collect();
    let mut bounds = Table::new(&["models", "op_upper", "cp_lower"]);
    for b in ope::bound_evolution(&op_boot, &cp_boot, cfg.ope.delta) {
        bounds.push(vec![b.models.to_string(), num(b.op_upper), num(b.cp_lower)]);
    }
    bounds.write(&put("bounds.csv"), &audit)?;
    crate::report::summarize(&split_table, None)?.write(&put("summary.csv"), &audit)?;
    crate::report::summarize(&curves, Some("g_ud"))?.write(&put("curves_summary.csv"), &audit)?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: audit.config_hash.clone(),
        seed: cfg.seed,
        split_seeds: splits.iter().map(|r| r.seed).collect(),
        stays_included: stays.len(),
        stays_excluded: excluded,
        outputs: Manifest::digest_outputs(out, &written)?,
    };
    let manifest_hash = manifest.write(out)?;
    Ok(RunOutcome { manifest, manifest_hash, splits })
}
