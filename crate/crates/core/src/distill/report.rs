use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean objective over the epoch's optimizer steps.
    pub loss: f64,
    /// Held-out metrics after the epoch.
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub role: Role,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub n_train: usize,
    pub n_auxiliary: usize,
    pub n_held_out: usize,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: MetricReport,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// Equal in everything but wall-clock time.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        TrainReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        } == TrainReport {
            wall_clock_secs: 0.0,
            ..other.clone()
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Hex SHA-256 of the canonical JSON form of `cfg`.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

/// One CSV line: a setting's state after one epoch of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub setting: String,
    pub seed: u64,
    pub epoch: usize,
    pub loss: f64,
    pub rmse: f64,
    pub rel: f64,
    pub delta1: f64,
}

pub fn curve_rows(setting: &str, report: &TrainReport) -> Vec<CurveRow> {
    report
        .epochs
        .iter()
        .map(|e| CurveRow {
            setting: setting.to_string(),
            seed: report.seed,
            epoch: e.epoch,
            loss: e.loss,
            rmse: e.metrics.rmse,
            rel: e.metrics.rel,
            delta1: e.metrics.delta1,
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

/// Median of a non-empty slice; the mean of the middle pair for even
/// lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}
