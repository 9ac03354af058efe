//! File formats: CSV inputs and tables, JSON models, JSON-lines trajectories.
//!
//! Every file is written to a sibling temporary path first and renamed into
//! place, so an interrupted run never leaves a half-written output.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use discharge_core::ingest::{AggregationMode, Event, FeatureSchema, FeatureSpec, PeriodFeatureMatrix, RawEventStream};
use discharge_core::linalg::Matrix;
use discharge_core::transitions::{LabeledTrajectory, TerminalEvent};

use crate::error::{CliError, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Fails with a configuration error when an input is missing.
pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("input file {} does not exist", path.display())))
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    require_file(path)?;
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| csv_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Deserialize, Serialize)]
struct SchemaRow {
    feature: String,
    mode: String,
}

pub fn read_schema(path: &Path) -> Result<FeatureSchema> {
    let mut features = Vec::new();
    for row in reader(path)?.deserialize::<SchemaRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let mode = AggregationMode::parse(&row.mode)
            .ok_or_else(|| csv_err(path, format!("unknown aggregation mode {:?}", row.mode)))?;
        if features.iter().any(|f: &FeatureSpec| f.name == row.feature) {
            return Err(csv_err(path, format!("feature {:?} declared twice", row.feature)));
        }
        features.push(FeatureSpec { name: row.feature, mode });
    }
    if features.is_empty() {
        return Err(csv_err(path, "schema declares no features"));
    }
    Ok(FeatureSchema::new(features))
}

pub fn write_schema(path: &Path, schema: &FeatureSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for f in &schema.features {
        w.serialize(SchemaRow { feature: f.name.clone(), mode: f.mode.as_str().to_string() })
            .map_err(|e| csv_err(path, e))?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| csv_err(path, e))?)
}

#[derive(Debug, Deserialize, Serialize)]
struct EventRow {
    stay_id: String,
    timestamp_hours: f64,
    feature: String,
    value: f64,
}

/// Events grouped by stay, stays in id order, events in file order.
pub fn read_events(path: &Path) -> Result<Vec<RawEventStream>> {
    let mut by_stay: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for row in reader(path)?.deserialize::<EventRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        by_stay.entry(row.stay_id).or_default().push(Event {
            timestamp_hours: row.timestamp_hours,
            feature: row.feature,
            value: row.value,
        });
    }
    Ok(by_stay.into_iter().map(|(stay_id, events)| RawEventStream { stay_id, events }).collect())
}

pub fn write_events(path: &Path, streams: &[RawEventStream]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in streams {
        for e in &s.events {
            w.serialize(EventRow {
                stay_id: s.stay_id.clone(),
                timestamp_hours: e.timestamp_hours,
                feature: e.feature.clone(),
                value: e.value,
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    write_atomic(path, &w.into_inner().map_err(|e| csv_err(path, e))?)
}

/// How a stay ended and how many periods it spans.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct Outcome {
    pub stay_id: String,
    pub terminal_event: String,
    pub n_periods: usize,
    pub window_days: u32,
}

impl Outcome {
    pub fn event(&self) -> Result<TerminalEvent> {
        TerminalEvent::parse(&self.terminal_event)
            .ok_or_else(|| CliError::data(format!("stay {}: unknown terminal event {:?}", self.stay_id, self.terminal_event)))
    }
}

pub fn read_outcomes(path: &Path) -> Result<BTreeMap<String, Outcome>> {
    let mut out = BTreeMap::new();
    for row in reader(path)?.deserialize::<Outcome>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        row.event()?;
        if row.n_periods == 0 {
            return Err(csv_err(path, format!("stay {} has zero periods", row.stay_id)));
        }
        if out.insert(row.stay_id.clone(), row).is_some() {
            return Err(csv_err(path, "duplicate stay_id"));
        }
    }
    Ok(out)
}

pub fn write_outcomes(path: &Path, outcomes: &[Outcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        w.serialize(o).map_err(|e| csv_err(path, e))?;
    }
    write_atomic(path, &w.into_inner().map_err(|e| csv_err(path, e))?)
}

/// Preprocessed per-period features: `stay_id, period, <features...>`.
pub fn write_features(path: &Path, names: &[String], matrices: &[PeriodFeatureMatrix]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["stay_id".to_string(), "period".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for m in matrices {
        for t in 0..m.n_periods() {
            let mut rec = vec![m.stay_id.clone(), t.to_string()];
            rec.extend(m.values.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    write_atomic(path, &w.into_inner().map_err(|e| csv_err(path, e))?)
}

/// Per-stay feature rows, keyed and ordered by stay id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub stays: Vec<(String, Matrix)>,
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 3 || &header[0] != "stay_id" || &header[1] != "period" {
        return Err(csv_err(path, "expected columns stay_id, period, <features>"));
    }
    let names: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let f = names.len();
    let mut rows: BTreeMap<String, Vec<(usize, Vec<f64>)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let period: usize = rec[1].parse().map_err(|e| csv_err(path, e))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|e| csv_err(path, e)))
            .collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(csv_err(path, format!("stay {}: non-finite feature value", &rec[0])));
        }
        rows.entry(rec[0].to_string()).or_default().push((period, values));
    }
    let mut stays = Vec::with_capacity(rows.len());
    for (id, mut r) in rows {
        r.sort_by_key(|x| x.0);
        if r.iter().enumerate().any(|(i, x)| x.0 != i) {
            return Err(csv_err(path, format!("stay {id}: periods must be 0..n without gaps")));
        }
        let data = r.into_iter().flat_map(|x| x.1).collect::<Vec<_>>();
        stays.push((id, Matrix::from_vec(data.len() / f, f, data)));
    }
    Ok(FeatureTable { names, stays })
}

pub fn read_trajectories(path: &Path) -> Result<Vec<LabeledTrajectory>> {
    require_file(path)?;
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: LabeledTrajectory =
            serde_json::from_str(&line).map_err(|e| csv_err(path, format!("line {}: {e}", i + 1)))?;
        if t.is_empty() {
            return Err(csv_err(path, format!("line {}: empty trajectory", i + 1)));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_trajectories(path: &Path, trajectories: &[LabeledTrajectory]) -> Result<()> {
    let mut text = String::new();
    for t in trajectories {
        text.push_str(&serde_json::to_string(t).map_err(|e| CliError::Numeric(e.to_string()))?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// A CSV table. `write` appends the audit columns `seed` and `config_hash`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: Table) {
        debug_assert_eq!(self.header, other.header);
        self.rows.extend(other.rows);
    }

    pub fn write(&self, path: &Path, audit: &Audit) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.header.clone();
        header.extend(["seed".to_string(), "config_hash".to_string()]);
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for row in &self.rows {
            let mut rec = row.clone();
            rec.push(audit.seed.to_string());
            rec.push(audit.config_hash.clone());
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        write_atomic(path, &w.into_inner().map_err(|e| csv_err(path, e))?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = reader(path)?;
        let header = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec.map_err(|e| csv_err(path, e))?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Seed and configuration hash stamped on every output table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Audit {
    pub seed: u64,
    pub config_hash: String,
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
