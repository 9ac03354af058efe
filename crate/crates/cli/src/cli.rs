//! Command-line interface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use discharge_core::cluster;
use discharge_core::mdp::CostSpec;
use discharge_core::ope::{self, Evaluator, OpeConfig};
use discharge_core::policies::{self, PolicyKind};
use discharge_core::rng;
use discharge_core::transitions::{self, LabeledTrajectory, SojournFit, TransitionModel};
use discharge_core::StateId;

use crate::config::{config_hash, Method, RunConfig, SyntheticConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, num, Audit, Table};
use crate::pipeline::{self, CALIBRATION_HEADER, CURVE_HEADER};
use crate::report;
use crate::stages::{self, PolicyFile};

pub const OUT_DIR_ENV: &str = "DISCHARGE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "discharge", version, about = "Learn, solve and evaluate ICU discharge policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic cohort: events, schema, outcomes and the true model.
    Simulate(SimulateArgs),
    /// Bin, cap and impute raw events into per-period features.
    Preprocess(PreprocessArgs),
    /// Fit health states by k-means and label trajectories.
    Cluster(ClusterArgs),
    /// Estimate transition probabilities from labeled trajectories.
    Estimate(EstimateArgs),
    /// Solve the discharge MDP.
    Solve(SolveArgs),
    /// Replay a policy along recorded trajectories.
    ApplyPolicy(ApplyArgs),
    /// Off-policy evaluation of OP and CP with bootstrap bounds.
    Ope(OpeArgs),
    /// Performance curves over a grid of UD costs.
    Curves(CurvesArgs),
    /// Realized CP cost deciles against UD rate.
    Calibrate(CalibrateArgs),
    /// Median and IQR of every numeric column of result tables.
    Report(ReportArgs),
    /// Full pipeline over repeated train/test splits.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CostArgs {
    /// Cost of an unsuccessful discharge.
    #[arg(long, default_value_t = 3.0)]
    pub gud: f64,
    #[arg(long, default_value_t = discharge_core::mdp::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub g_keep: f64,
    #[arg(long, default_value_t = 0.0)]
    pub g_discharge: f64,
    #[arg(long, default_value_t = 0.0)]
    pub g_sd: f64,
    #[arg(long, default_value_t = transitions::DEFAULT_WINDOW_DAYS)]
    pub window_days: u32,
}

impl CostArgs {
    pub fn cost(&self, n_states: usize) -> CostSpec {
        CostSpec {
            g_keep: vec![self.g_keep; n_states],
            g_discharge: vec![self.g_discharge; n_states],
            g_sd: self.g_sd,
            g_ud: self.gud,
            alpha: self.alpha,
            window_days: self.window_days,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McArgs {
    /// Monte-Carlo rollouts per deferred stay.
    #[arg(long, default_value_t = ope::DEFAULT_MC_SIMS)]
    pub mc: usize,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = ope::DEFAULT_BOOTSTRAP)]
    pub boot: usize,
    #[arg(long, default_value_t = ope::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = ope::DEFAULT_HORIZON_CAP)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = discharge_core::ingest::DEFAULT_PERIOD_HOURS)]
    pub period_hours: f64,
}

impl McArgs {
    fn config(&self) -> OpeConfig {
        OpeConfig {
            n_mc_sims: self.mc,
            n_bootstrap: self.boot,
            delta: self.delta,
            horizon_cap: self.horizon,
            seed: self.seed,
            period_hours: self.period_hours,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// TOML file whose `[synthetic]` section sets the generator.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_states: Option<usize>,
    #[arg(long)]
    pub n_features: Option<usize>,
    #[arg(long)]
    pub stays: Option<usize>,
    /// Fraction of measurements dropped.
    #[arg(long)]
    pub drop: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = discharge_core::ingest::DEFAULT_PERIOD_HOURS)]
    pub period_hours: f64,
    #[arg(long, default_value_t = transitions::DEFAULT_WINDOW_DAYS)]
    pub window_days: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub outcomes: PathBuf,
    #[arg(long, default_value_t = discharge_core::ingest::DEFAULT_PERIOD_HOURS)]
    pub period_hours: f64,
    #[arg(long, default_value_t = discharge_core::ingest::DEFAULT_IMPUTE_ROUNDS)]
    pub impute_rounds: usize,
    /// Largest fraction of never-measured MEAN features a stay may have.
    #[arg(long, default_value_t = 0.5)]
    pub max_missing: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Outcomes; needed to label trajectories and to restrict clustering to
    /// discharged stays.
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    #[arg(long, default_value_t = cluster::DEFAULT_STATES)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = cluster::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = cluster::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Cluster periods of every stay, not only discharged ones.
    #[arg(long)]
    pub all_windows: bool,
    /// Comma-separated k values for an elbow (WCSS) table.
    #[arg(long, value_delimiter = ',')]
    pub elbow: Vec<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub trajectories: PathBuf,
    /// Number of states; defaults to the largest state seen.
    #[arg(long)]
    pub n_states: Option<usize>,
    /// Emit held-out R² for keep, SD and UD counts.
    #[arg(long)]
    pub validate: bool,
    /// Held-out trajectories; without it a random split is made.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Fit exponential sojourn-time decays for every state.
    #[arg(long)]
    pub sojourn: bool,
    #[arg(long, default_value_t = 10_000)]
    pub sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub cost: CostArgs,
    #[arg(long, value_enum, default_value_t = Method::Pi)]
    pub method: Method,
    #[arg(long, default_value_t = discharge_core::mdp::DEFAULT_VI_TOLERANCE)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Op,
    Cp,
    Rp1,
    Rp2,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ApplyArgs {
    #[arg(long)]
    pub trajectories: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Solved policy (`solve` output); required for op, and for rp2 without
    /// `--gamma`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// RP2 extension probability; defaults to OP's deferral rate.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OpeArgs {
    /// Test trajectories.
    #[arg(long)]
    pub trajectories: PathBuf,
    /// Evaluation model; defaults to one estimated from the trajectories.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Solved policy to evaluate; without it OP is solved on the model.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub n_states: Option<usize>,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurvesArgs {
    /// Test trajectories.
    #[arg(long)]
    pub trajectories: PathBuf,
    /// Model OP is solved on (usually estimated from training stays).
    #[arg(long)]
    pub model: PathBuf,
    /// Model for early-discharge risk and rollouts; defaults to one
    /// estimated from the test trajectories.
    #[arg(long)]
    pub eval_model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 2.0, 3.0, 5.0])]
    pub gud_grid: Vec<f64>,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub trajectories: PathBuf,
    #[command(flatten)]
    pub cost: CostArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// One or more tables with identical columns.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub group_by: Option<String>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Run configuration (TOML); defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_splits: Option<usize>,
    #[arg(long)]
    pub stays: Option<usize>,
    #[arg(long)]
    pub gud: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub out: OutArg,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.k {
            cfg.cluster.k = v;
        }
        if let Some(v) = self.n_splits {
            cfg.experiment.n_splits = v;
        }
        if let Some(v) = self.stays {
            cfg.synthetic.n_stays = v;
        }
        if let Some(v) = self.gud {
            cfg.mdp.g_ud = v;
        }
        Ok(cfg)
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Preprocess(a) => preprocess(&a),
        Command::Cluster(a) => cluster_cmd(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Solve(a) => solve(&a),
        Command::ApplyPolicy(a) => apply_policy(&a),
        Command::Ope(a) => ope_cmd(&a),
        Command::Curves(a) => curves(&a),
        Command::Calibrate(a) => calibrate(&a),
        Command::Report(a) => report_cmd(&a),
        Command::Run(a) => run(&a),
    }
}

fn audit<T: Serialize>(args: &T, seed: u64) -> Audit {
    Audit { seed, config_hash: config_hash(args) }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn require_all(paths: &[&Path]) -> Result<()> {
    paths.iter().try_for_each(|p| formats::require_file(p))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?.synthetic,
        None => SyntheticConfig::default(),
    };
    if let Some(v) = a.n_states {
        cfg.model.n_states = v;
    }
    if let Some(v) = a.n_features {
        cfg.model.n_features = v;
    }
    if let Some(v) = a.stays {
        cfg.n_stays = v;
    }
    if let Some(v) = a.drop {
        cfg.drop_fraction = v;
    }
    if let Some(v) = a.separation {
        cfg.model.separation = v;
    }
    if let Some(v) = a.noise {
        cfg.model.noise = v;
    }
    let sim = stages::simulate(&cfg, a.period_hours, a.window_days, a.seed)?;
    let dir = &a.out.out;
    formats::write_json(&dir.join("truth.json"), &sim.truth)?;
    formats::write_trajectories(&dir.join("true_trajectories.jsonl"), &sim.trajectories)?;
    formats::write_events(&dir.join("events.csv"), &sim.cohort.streams)?;
    formats::write_schema(&dir.join("schema.csv"), &sim.cohort.schema)?;
    let outcomes: Vec<_> = sim.cohort.outcomes.values().cloned().collect();
    formats::write_outcomes(&dir.join("outcomes.csv"), &outcomes)?;
    println!("simulated {} stays into {}", sim.trajectories.len(), dir.display());
    Ok(())
}

fn preprocess(a: &PreprocessArgs) -> Result<()> {
    require_all(&[&a.events, &a.schema, &a.outcomes])?;
    let cohort = stages::Cohort {
        schema: formats::read_schema(&a.schema)?,
        streams: formats::read_events(&a.events)?,
        outcomes: formats::read_outcomes(&a.outcomes)?,
    };
    let ingest = crate::config::IngestConfig {
        period_hours: a.period_hours,
        impute_rounds: a.impute_rounds,
        max_missing_fraction: a.max_missing,
    };
    let (stays, excluded) = stages::bin_stays(&cohort, &ingest)?;
    if stays.is_empty() {
        return Err(CliError::data("no stay passes the inclusion rule"));
    }
    let all: Vec<&stages::Stay> = stays.iter().collect();
    let features = stages::preprocess(&all, &stays, cohort.schema.len(), a.impute_rounds)?;
    let names: Vec<String> = cohort.schema.features.iter().map(|f| f.name.clone()).collect();
    let path = a.out.out.join("features.csv");
    formats::write_features(&path, &names, &features)?;
    announce(&path);
    println!("{} stays kept, {excluded} excluded", stays.len());
    Ok(())
}

fn cluster_cmd(a: &ClusterArgs) -> Result<()> {
    require_all(&[&a.features])?;
    if let Some(o) = &a.outcomes {
        formats::require_file(o)?;
    }
    let table = formats::read_features(&a.features)?;
    let outcomes = a.outcomes.as_deref().map(formats::read_outcomes).transpose()?;
    let mut data = Vec::new();
    for (id, m) in &table.stays {
        let use_stay = match &outcomes {
            Some(o) => {
                let outcome = o.get(id).ok_or_else(|| CliError::data(format!("stay {id} has no outcome")))?;
                a.all_windows || outcome.event()?.is_discharge()
            }
            None => true,
        };
        if use_stay {
            data.extend_from_slice(m.as_slice());
        }
    }
    let f = table.names.len();
    let rows = discharge_core::linalg::Matrix::from_vec(data.len() / f, f, data);
    if rows.rows() == 0 {
        return Err(CliError::data("no periods available for clustering"));
    }
    let (model, fit) = stages::fit_states(&rows, a.k, a.seed, a.restarts, a.max_iter)?;
    let dir = &a.out.out;
    let au = audit(a, a.seed);
    formats::write_json(&dir.join("state_model.json"), &model)?;
    let mut history = Table::new(&["iteration", "wcss"]);
    for (i, w) in fit.wcss_history.iter().enumerate() {
        history.push(vec![(i + 1).to_string(), num(*w)]);
    }
    history.write(&dir.join("wcss_history.csv"), &au)?;
    if !a.elbow.is_empty() {
        let scaled = model.scaler.transform(&rows);
        let mut elbow = Table::new(&["k", "wcss"]);
        for (k, w) in cluster::wcss_curve(&scaled, &a.elbow, a.seed, a.restarts)? {
            elbow.push(vec![k.to_string(), num(w)]);
        }
        elbow.write(&dir.join("elbow.csv"), &au)?;
    }
    if let Some(o) = &outcomes {
        let trajectories = table
            .stays
            .iter()
            .map(|(id, m)| {
                let states =
                    m.iter_rows().map(|r| model.assign_raw(r)).collect::<std::result::Result<Vec<_>, _>>()?;
                let outcome = &o[id];
                Ok(LabeledTrajectory {
                    stay_id: id.clone(),
                    states,
                    terminal_event: outcome.event()?,
                    window_days: outcome.window_days,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        formats::write_trajectories(&dir.join("trajectories.jsonl"), &trajectories)?;
    }
    println!("k = {}, wcss = {}, {} periods; wrote {}", a.k, fit.wcss, rows.rows(), dir.display());
    Ok(())
}

fn n_states_for(given: Option<usize>, trajectories: &[LabeledTrajectory]) -> Result<usize> {
    let seen = stages::infer_states(trajectories);
    match given {
        Some(n) if n < seen => Err(CliError::data(format!("trajectories use state {seen} but --n-states is {n}"))),
        Some(0) => Err(CliError::config("--n-states must be positive")),
        Some(n) => Ok(n),
        None if seen == 0 => Err(CliError::data("no trajectories")),
        None => Ok(seen),
    }
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    require_all(&[&a.trajectories])?;
    if let Some(t) = &a.test {
        formats::require_file(t)?;
    }
    if a.validate && a.test.is_none() && !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(CliError::config("--train-fraction must lie in (0, 1)"));
    }
    let all = formats::read_trajectories(&a.trajectories)?;
    let mut train = all.clone();
    let mut test = Vec::new();
    if a.validate {
        match &a.test {
            Some(p) => test = formats::read_trajectories(p)?,
            None => {
                use rand::seq::SliceRandom;
                let mut order: Vec<usize> = (0..all.len()).collect();
                order.shuffle(&mut rng::stream(a.seed, 0));
                let n_train = ((all.len() as f64 * a.train_fraction).round() as usize).clamp(1, all.len().max(2) - 1);
                let (mut tr, mut te) = (order[..n_train].to_vec(), order[n_train..].to_vec());
                tr.sort_unstable();
                te.sort_unstable();
                train = tr.iter().map(|&i| all[i].clone()).collect();
                test = te.iter().map(|&i| all[i].clone()).collect();
            }
        }
    }
    let mut everything = train.clone();
    everything.extend(test.iter().cloned());
    let h = n_states_for(a.n_states, &everything)?;
    let model = TransitionModel::estimate(h, &train)?;
    let dir = &a.out.out;
    let au = audit(a, a.seed);
    formats::write_json(&dir.join("transition_model.json"), &model)?;
    announce(&dir.join("transition_model.json"));
    if a.validate {
        let r2 = transitions::validate_r2(&model, &test)?;
        let mut t = Table::new(&["n_train", "n_test", "r2_keep", "r2_sd", "r2_ud"]);
        t.push(vec![train.len().to_string(), test.len().to_string(), num(r2.keep), num(r2.sd), num(r2.ud)]);
        t.write(&dir.join("r2.csv"), &au)?;
        println!("R2 keep {} sd {} ud {}", r2.keep, r2.sd, r2.ud);
    }
    if a.sojourn {
        let mut t = Table::new(&["state", "self_loop", "fit", "lambda", "neg_log_self_loop", "gamma", "r2", "mean_sojourn"]);
        for x in 0..h {
            let p = model.keep_matrix[(x, x)];
            let fit = transitions::sojourn_exponential_check(&model, StateId::from_index(x), a.sims, a.seed)?;
            let reference = if p > 0.0 { num(-p.ln()) } else { String::new() };
            let row = match &fit {
                SojournFit::Absorbing => vec!["absorbing".into(), String::new(), reference, String::new(), String::new(), String::new()],
                SojournFit::SinglePeriod => vec!["single_period".into(), String::new(), reference, String::new(), String::new(), "1".into()],
                SojournFit::Fitted { gamma, lambda, r2, mean_sojourn, .. } => {
                    vec!["fitted".into(), num(*lambda), reference, num(*gamma), num(*r2), num(*mean_sojourn)]
                }
            };
            let mut rec = vec![(x + 1).to_string(), num(p)];
            rec.extend(row);
            t.push(rec);
        }
        t.write(&dir.join("sojourn.csv"), &au)?;
    }
    Ok(())
}

fn solve(a: &SolveArgs) -> Result<()> {
    require_all(&[&a.model])?;
    let model: TransitionModel = formats::read_json(&a.model)?;
    model.validate()?;
    let policy = stages::solve(&model, &a.cost.cost(model.n_states), a.method, a.tol)?;
    write_policy(&a.out.out, &policy, &audit(a, 0))?;
    println!(
        "{} of {} states discharge, {} iterations",
        policy.solution.policy.discharge_count(),
        model.n_states,
        policy.solution.iterations
    );
    Ok(())
}

fn write_policy(dir: &Path, policy: &PolicyFile, au: &Audit) -> Result<()> {
    formats::write_json(&dir.join("policy.json"), policy)?;
    let mut t = Table::new(&["state", "action", "value"]);
    for (x, (a, v)) in policy.solution.policy.actions.iter().zip(&policy.solution.value.states).enumerate() {
        t.push(vec![(x + 1).to_string(), a.as_char().to_string(), num(*v)]);
    }
    t.write(&dir.join("policy.csv"), au)?;
    announce(&dir.join("policy.json"));
    Ok(())
}

fn read_policy(path: &Path) -> Result<PolicyFile> {
    formats::read_json(path)
}

fn apply_policy(a: &ApplyArgs) -> Result<()> {
    require_all(&[&a.trajectories])?;
    if let Some(p) = &a.policy {
        formats::require_file(p)?;
    }
    let trajectories = formats::read_trajectories(&a.trajectories)?;
    let policy = a.policy.as_deref().map(read_policy).transpose()?;
    let need_policy = || policy.as_ref().ok_or_else(|| CliError::config("--policy is required for this kind"));
    let kind = match a.kind {
        KindArg::Op => ope::optimal(&need_policy()?.solution.policy),
        KindArg::Cp => PolicyKind::Clinician,
        KindArg::Rp1 => PolicyKind::Random { seed: a.seed },
        KindArg::Rp2 => {
            let gamma = match a.gamma {
                Some(g) => g,
                None => {
                    let discharged = ope::discharged_only(&trajectories);
                    policies::match_rp2_gamma_for(&need_policy()?.solution.policy, &discharged)?
                }
            };
            PolicyKind::pseudo_random(gamma, a.seed)?
        }
    };
    let mut t = Table::new(&["policy", "stay_id", "recorded_periods", "discharge_step", "deferred"]);
    for traj in &trajectories {
        let d = policies::apply_to_trajectory(&kind, traj)?;
        t.push(vec![
            kind.label().to_string(),
            d.stay_id,
            d.recorded_periods.to_string(),
            d.discharge_step.map(|s| s.to_string()).unwrap_or_default(),
            d.discharge_step.is_none().to_string(),
        ]);
    }
    let path = a.out.out.join("decisions.csv");
    t.write(&path, &audit(a, a.seed))?;
    announce(&path);
    Ok(())
}

fn eval_model(path: Option<&Path>, n_states: Option<usize>, trajectories: &[LabeledTrajectory]) -> Result<TransitionModel> {
    match path {
        Some(p) => {
            let m: TransitionModel = formats::read_json(p)?;
            m.validate()?;
            Ok(m)
        }
        None => Ok(TransitionModel::estimate(n_states_for(n_states, trajectories)?, trajectories)?),
    }
}

fn ope_cmd(a: &OpeArgs) -> Result<()> {
    require_all(&[&a.trajectories])?;
    for p in [&a.model, &a.policy].into_iter().flatten() {
        formats::require_file(p)?;
    }
    let config = a.mc.config();
    config.validate()?;
    let all = formats::read_trajectories(&a.trajectories)?;
    let test = ope::discharged_only(&all);
    if test.is_empty() {
        return Err(CliError::data("no discharged trajectories to evaluate"));
    }
    let model = eval_model(a.model.as_deref(), a.n_states, &all)?;
    let policy = match &a.policy {
        Some(p) => read_policy(p)?,
        None => stages::solve(&model, &a.cost.cost(model.n_states), Method::Pi, 1e-8)?,
    };
    if policy.solution.policy.len() != model.n_states {
        return Err(CliError::data(format!(
            "policy has {} states but the model has {}",
            policy.solution.policy.len(),
            model.n_states
        )));
    }
    let cost = policy.cost.clone();
    let evaluator = Evaluator::new(&model, &cost, config)?;
    let kinds = [ope::optimal(&policy.solution.policy), PolicyKind::Clinician];
    let evals = ope::evaluate_policies(&evaluator, &test, &kinds)?;
    let au = audit(a, a.mc.seed);
    let dir = &a.out.out;
    let mut t = Table::new(&["policy", "n", "mean_cost", "lower", "upper", "simulated", "horizon_capped"]);
    for e in &evals {
        t.push(vec![
            e.label.clone(),
            e.costs.len().to_string(),
            num(e.estimate.mean_cost),
            num(e.estimate.lower_bound),
            num(e.estimate.upper_bound),
            e.simulated.to_string(),
            e.horizon_capped.to_string(),
        ]);
        println!("{}: {} [{}, {}]", e.label, e.estimate.mean_cost, e.estimate.lower_bound, e.estimate.upper_bound);
    }
    t.write(&dir.join("ope.csv"), &au)?;
    let mut c = Table::new(&["stay_id", "op_cost", "cp_cost"]);
    for (i, traj) in test.iter().enumerate() {
        c.push(vec![traj.stay_id.clone(), num(evals[0].costs[i]), num(evals[1].costs[i])]);
    }
    c.write(&dir.join("ope_costs.csv"), &au)?;
    Ok(())
}

fn curves(a: &CurvesArgs) -> Result<()> {
    require_all(&[&a.trajectories, &a.model])?;
    if let Some(p) = &a.eval_model {
        formats::require_file(p)?;
    }
    let config = a.mc.config();
    config.validate()?;
    if a.gud_grid.is_empty() {
        return Err(CliError::config("--gud-grid is empty"));
    }
    let all = formats::read_trajectories(&a.trajectories)?;
    let test = ope::discharged_only(&all);
    let policy_model: TransitionModel = formats::read_json(&a.model)?;
    policy_model.validate()?;
    let eval = eval_model(a.eval_model.as_deref(), Some(policy_model.n_states), &all)?;
    let cost = a.cost.cost(policy_model.n_states);
    let points = ope::performance_curves(&policy_model, &eval, &cost, &a.gud_grid, &test, config)?;
    let mut t = Table::new(&CURVE_HEADER);
    for p in &points {
        t.push(pipeline::curve_row(p));
    }
    let path = a.out.out.join("curves.csv");
    t.write(&path, &audit(a, a.mc.seed))?;
    announce(&path);
    Ok(())
}

fn calibrate(a: &CalibrateArgs) -> Result<()> {
    require_all(&[&a.trajectories])?;
    let test = ope::discharged_only(&formats::read_trajectories(&a.trajectories)?);
    let h = stages::infer_states(&test).max(1);
    let rows = ope::policy_calibration(&test, &a.cost.cost(h))?;
    let mut t = Table::new(&CALIBRATION_HEADER);
    for r in &rows {
        t.push(pipeline::calibration_row(r));
    }
    let path = a.out.out.join("calibration.csv");
    t.write(&path, &audit(a, 0))?;
    announce(&path);
    Ok(())
}

fn report_cmd(a: &ReportArgs) -> Result<()> {
    let refs: Vec<&Path> = a.input.iter().map(PathBuf::as_path).collect();
    require_all(&refs)?;
    let mut table: Option<Table> = None;
    for p in &a.input {
        let t = Table::read(p)?;
        match &mut table {
            None => table = Some(t),
            Some(acc) if acc.header == t.header => acc.rows.extend(t.rows),
            Some(_) => return Err(CliError::data(format!("{} has different columns", p.display()))),
        }
    }
    let table = table.expect("at least one input");
    let seed = table
        .column("seed")
        .and_then(|c| table.rows.first().and_then(|r| r[c].parse().ok()))
        .unwrap_or(0);
    let summary = report::summarize(&table, a.group_by.as_deref())?;
    let path = a.out.out.join("summary.csv");
    summary.write(&path, &audit(a, seed))?;
    announce(&path);
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let outcome = pipeline::run_pipeline(&cfg, &a.out.out, a.jobs)?;
    let mut by_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &outcome.splits {
        for e in &s.evaluations {
            by_label.entry(e.label.as_str()).or_default().push(e.estimate.mean_cost);
        }
    }
    for (label, v) in by_label {
        let m = discharge_core::stats::median(&v).unwrap_or(f64::NAN);
        println!("{label}: median cost {m} over {} splits", v.len());
    }
    println!("manifest {} ({})", outcome.manifest_hash, a.out.out.join(crate::manifest::MANIFEST).display());
    Ok(())
}
