//! Run configuration: one TOML file with nested sections, every field
//! optional. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use discharge_core::cluster::{DEFAULT_MAX_ITER, DEFAULT_RESTARTS, DEFAULT_STATES};
use discharge_core::ingest::{DEFAULT_IMPUTE_ROUNDS, DEFAULT_PERIOD_HOURS};
use discharge_core::mdp::{CostSpec, DEFAULT_ALPHA, DEFAULT_VI_TOLERANCE};
use discharge_core::ope::{OpeConfig, DEFAULT_BOOTSTRAP, DEFAULT_DELTA, DEFAULT_HORIZON_CAP, DEFAULT_MC_SIMS};
use discharge_core::synth::{CohortOptions, GradientConfig};
use discharge_core::transitions::DEFAULT_WINDOW_DAYS;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub ingest: IngestConfig,
    pub cluster: ClusterConfig,
    pub mdp: MdpConfig,
    pub ope: OpeSection,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub events: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
}

/// Cohort size and generator shape; the generator fields sit directly in
/// the `[synthetic]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_stays: usize,
    pub drop_fraction: f64,
    pub max_periods: usize,
    #[serde(flatten)]
    pub model: GradientConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_stays: 5000,
            drop_fraction: 0.1,
            max_periods: CohortOptions::default().max_periods,
            model: GradientConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub period_hours: f64,
    pub impute_rounds: usize,
    pub max_missing_fraction: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { period_hours: DEFAULT_PERIOD_HOURS, impute_rounds: DEFAULT_IMPUTE_ROUNDS, max_missing_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub all_windows: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { k: DEFAULT_STATES, restarts: DEFAULT_RESTARTS, max_iter: DEFAULT_MAX_ITER, all_windows: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Pi,
    Vi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpConfig {
    pub alpha: f64,
    pub g_keep: f64,
    pub g_discharge: f64,
    pub g_sd: f64,
    pub g_ud: f64,
    pub window_days: u32,
    pub method: Method,
    pub vi_tolerance: f64,
}

impl Default for MdpConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            g_keep: 1.0,
            g_discharge: 0.0,
            g_sd: 0.0,
            g_ud: 3.0,
            window_days: DEFAULT_WINDOW_DAYS,
            method: Method::Pi,
            vi_tolerance: DEFAULT_VI_TOLERANCE,
        }
    }
}

impl MdpConfig {
    pub fn cost(&self, n_states: usize) -> CostSpec {
        CostSpec {
            g_keep: vec![self.g_keep; n_states],
            g_discharge: vec![self.g_discharge; n_states],
            g_sd: self.g_sd,
            g_ud: self.g_ud,
            alpha: self.alpha,
            window_days: self.window_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpeSection {
    pub mc: usize,
    pub bootstrap: usize,
    pub delta: f64,
    pub horizon_cap: usize,
}

impl Default for OpeSection {
    fn default() -> Self {
        Self { mc: DEFAULT_MC_SIMS, bootstrap: DEFAULT_BOOTSTRAP, delta: DEFAULT_DELTA, horizon_cap: DEFAULT_HORIZON_CAP }
    }
}

impl OpeSection {
    pub fn to_core(&self, seed: u64, period_hours: f64) -> OpeConfig {
        OpeConfig {
            n_mc_sims: self.mc,
            n_bootstrap: self.bootstrap,
            delta: self.delta,
            horizon_cap: self.horizon_cap,
            seed,
            period_hours,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_splits: usize,
    pub train_fraction: f64,
    pub gud_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { n_splits: 50, train_fraction: 0.8, gud_grid: vec![0.0, 0.5, 1.0, 2.0, 3.0, 5.0] }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(CliError::config(format!("config file {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.events, &mut cfg.data.schema, &mut cfg.data.outcomes].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Checks ranges and that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::config(m.to_string()));
        if self.data.source == DataSource::Files {
            for (name, p) in [("events", &self.data.events), ("schema", &self.data.schema), ("outcomes", &self.data.outcomes)] {
                match p {
                    None => return bad(&format!("data.{name} is required when data.source = \"files\"")),
                    Some(p) if !p.is_file() => {
                        return Err(CliError::config(format!("input file {} does not exist", p.display())))
                    }
                    _ => {}
                }
            }
        } else if self.synthetic.n_stays < 2 {
            return bad("synthetic.n_stays must be at least 2");
        }
        if !(self.ingest.period_hours > 0.0 && self.ingest.period_hours.is_finite()) {
            return bad("ingest.period_hours must be positive");
        }
        if !(0.0..=1.0).contains(&self.ingest.max_missing_fraction) {
            return bad("ingest.max_missing_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.synthetic.drop_fraction) {
            return bad("synthetic.drop_fraction must lie in [0, 1]");
        }
        if self.cluster.k == 0 || self.cluster.restarts == 0 || self.cluster.max_iter == 0 {
            return bad("cluster.k, cluster.restarts and cluster.max_iter must be positive");
        }
        if !(self.mdp.alpha > 0.0 && self.mdp.alpha < 1.0) {
            return bad("mdp.alpha must lie in (0, 1)");
        }
        let costs = [self.mdp.g_keep, self.mdp.g_discharge, self.mdp.g_sd, self.mdp.g_ud];
        if costs.iter().any(|c| !c.is_finite()) || self.experiment.gud_grid.iter().any(|c| !c.is_finite()) {
            return bad("costs must be finite");
        }
        if self.experiment.n_splits == 0 {
            return bad("experiment.n_splits must be at least 1");
        }
        if !(self.experiment.train_fraction > 0.0 && self.experiment.train_fraction < 1.0) {
            return bad("experiment.train_fraction must lie in (0, 1)");
        }
        self.ope.to_core(self.seed, self.ingest.period_hours).validate()?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// SHA-256 of the canonical JSON encoding (struct field order, no
/// whitespace).
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(&json))
}
