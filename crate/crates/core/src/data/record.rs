use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{format_sig, parse_field};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, TrainConfig};
use crate::pruning::{AlgorithmSpec, Scope};

pub const RUN_JSON: &str = "run.json";
pub const ITERATIONS_CSV: &str = "iterations.csv";
const LOCK_FILE: &str = ".lock";

pub const CSV_HEADER: &str = "t,d_t,percent_remaining,acc_retrained,loss_retrained,acc_pruned,\
loss_pruned,pqi_retrained,pqi_pruned,gini_retrained,delta_acc,delta_pqi";

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: AlgorithmSpec,
    pub scope: Scope,
    pub layers: Vec<LayerSpec>,
    pub train: TrainConfig,
    pub seed: u64,
}

/// Per-group bookkeeping for one pruning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLog {
    /// Survivors before pruning.
    pub d: usize,
    /// Index the count was derived from (SAP only; `None` when undefined).
    pub index: Option<f64>,
    pub count: usize,
}

/// The CSV-visible metrics of one iteration, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub t: usize,
    pub d_t: usize,
    pub percent_remaining: f64,
    pub acc_retrained: f64,
    pub loss_retrained: f64,
    pub acc_pruned: f64,
    pub loss_pruned: f64,
    pub pqi_retrained: Option<f64>,
    pub pqi_pruned: Option<f64>,
    pub gini_retrained: Option<f64>,
    pub delta_acc: f64,
    pub delta_pqi: Option<f64>,
    /// Fields below are recorded in `run.json` only.
    #[serde(default)]
    pub gini_pruned: Option<f64>,
    #[serde(default)]
    pub pruned_total: usize,
    #[serde(default)]
    pub groups: Vec<GroupLog>,
}

impl IterationMetrics {
    fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_sig).unwrap_or_default();
        [
            self.t.to_string(),
            self.d_t.to_string(),
            format_sig(self.percent_remaining),
            format_sig(self.acc_retrained),
            format_sig(self.loss_retrained),
            format_sig(self.acc_pruned),
            format_sig(self.loss_pruned),
            opt(self.pqi_retrained),
            opt(self.pqi_pruned),
            opt(self.gini_retrained),
            format_sig(self.delta_acc),
            opt(self.delta_pqi),
        ]
        .join(",")
    }

    fn from_csv_row(fields: &[&str]) -> Option<Self> {
        if fields.len() != 12 {
            return None;
        }
        let num = |i: usize| parse_field(fields[i]);
        Some(Self {
            t: fields[0].trim().parse().ok()?,
            d_t: fields[1].trim().parse().ok()?,
            percent_remaining: num(2)?,
            acc_retrained: num(3)?,
            loss_retrained: num(4)?,
            acc_pruned: num(5)?,
            loss_pruned: num(6)?,
            pqi_retrained: num(7),
            pqi_pruned: num(8),
            gini_retrained: num(9),
            delta_acc: num(10)?,
            delta_pqi: num(11),
            gini_pruned: None,
            pruned_total: 0,
            groups: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { iteration: usize, reason: String },
}

/// Something noteworthy that did not stop the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEvent {
    pub t: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub status: RunStatus,
    /// Prunable weights before any pruning.
    pub d_0: usize,
    /// Survivors after the last pruning step.
    pub d_final: usize,
    pub iterations: Vec<IterationMetrics>,
    pub events: Vec<RunEvent>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn final_remaining(&self) -> f64 {
        self.d_final as f64 / self.d_0 as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.iterations.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for it in &self.iterations {
            out.push_str(&it.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `run.json` and `iterations.csv` into `dir`, creating it if needed.
pub fn write_run_record(rec: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let _lock = OutputLock::acquire(dir)?;
    let json_path = dir.join(RUN_JSON);
    let mut json = serde_json::to_string_pretty(rec).map_err(|source| Error::Json {
        path: json_path.clone(),
        source,
    })?;
    json.push('\n');
    write(&json_path, &json)?;
    write(&dir.join(ITERATIONS_CSV), &rec.to_csv())
}

/// Reads a record from a `run.json` path or the directory holding it.
pub fn read_run_record(path: &Path) -> Result<RunRecord> {
    let file = if path.is_dir() {
        path.join(RUN_JSON)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: file, source })
}

/// Parses an `iterations.csv` written by [`write_run_record`].
pub fn read_iterations_csv(path: &Path) -> Result<Vec<IterationMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: line,
        message,
    };
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(0, format!("unexpected header {other:?}"))),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            IterationMetrics::from_csv_row(&fields)
                .ok_or_else(|| bad(i + 1, format!("malformed row {line:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelKind;
    use crate::pruning::{AlgorithmKind, CountBasis};

    fn sample_record() -> RunRecord {
        let iterations = (0..4)
            .map(|t| {
                let d_t = [1000, 800, 640, 512][t];
                IterationMetrics {
                    t,
                    d_t,
                    percent_remaining: d_t as f64 / 1000.0,
                    acc_retrained: 0.9 + t as f64 * 0.01,
                    loss_retrained: 0.3 / (t + 1) as f64,
                    acc_pruned: 0.85,
                    loss_pruned: 0.41,
                    pqi_retrained: Some(0.1 + t as f64 / 7.0),
                    pqi_pruned: if t == 3 { None } else { Some(0.2) },
                    gini_retrained: Some(0.33),
                    delta_acc: 0.05,
                    delta_pqi: None,
                    gini_pruned: Some(0.4),
                    pruned_total: d_t / 5,
                    groups: vec![GroupLog {
                        d: d_t,
                        index: None,
                        count: d_t / 5,
                    }],
                }
            })
            .collect();
        RunRecord {
            config: RunConfig {
                algorithm: AlgorithmSpec {
                    kind: AlgorithmKind::LotteryTicket {
                        ratio: 0.2,
                        basis: CountBasis::Current,
                    },
                    iterations: 3,
                },
                scope: Scope::Global,
                layers: ModelKind::Linear.layers(10, 2),
                train: TrainConfig::desk(),
                seed: 3,
            },
            status: RunStatus::Completed,
            d_0: 1000,
            d_final: 410,
            iterations,
            events: vec![RunEvent {
                t: 2,
                message: "note".into(),
            }],
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rec = sample_record();
        write_run_record(&rec, dir.path()).unwrap();
        assert_eq!(read_run_record(dir.path()).unwrap(), rec);
        assert_eq!(read_run_record(&dir.path().join(RUN_JSON)).unwrap(), rec);
        assert!(!dir.path().join(LOCK_FILE).exists());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let rec = sample_record();
        write_run_record(&rec, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(ITERATIONS_CSV)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), rec.config.algorithm.iterations + 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[2].split(',').nth(2), Some("0.8"));
        let rows = read_iterations_csv(&dir.path().join(ITERATIONS_CSV)).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, it) in rows.iter().zip(&rec.iterations) {
            assert_eq!(row.d_t, it.d_t);
            assert!((row.percent_remaining - it.d_t as f64 / 1000.0).abs() < 1e-6);
            assert_eq!(row.pqi_pruned.is_some(), it.pqi_pruned.is_some());
        }
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let rec = sample_record();
        write_run_record(&rec, a.path()).unwrap();
        write_run_record(&rec, b.path()).unwrap();
        for name in [RUN_JSON, ITERATIONS_CSV] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap()
            );
        }
    }

    #[test]
    fn held_lock_blocks_writers() {
        let dir = tempfile::tempdir().unwrap();
        let _held = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            write_run_record(&sample_record(), dir.path()),
            Err(Error::Locked(_))
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_run_record(Path::new("/nonexistent/run.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run.json"));
    }
}
