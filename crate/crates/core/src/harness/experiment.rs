//! Seed x algorithm cells, their output directories and the summary table.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{error, info};
use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::data::{
    format_sig, parse_field, read_iterations_csv, read_run_record, write_run_record,
    IterationMetrics, OutputLock, RunRecord, RunStatus, SplitDataset, ITERATIONS_CSV, RUN_JSON,
};
use crate::error::{Error, Result};
use crate::pruning::{run_pruning, AlgorithmSpec};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const CELLS_CSV: &str = "cells.csv";
pub const CONFIG_ECHO: &str = "experiment.cfg";

/// Columns aggregated in `summary.csv`, in order.
pub const SUMMARY_METRICS: [&str; 11] = [
    "d_t",
    "percent_remaining",
    "acc_retrained",
    "loss_retrained",
    "acc_pruned",
    "loss_pruned",
    "pqi_retrained",
    "pqi_pruned",
    "gini_retrained",
    "delta_acc",
    "delta_pqi",
];

pub fn cell_name(algorithm: &str, seed: u64) -> String {
    format!("{algorithm}_seed{seed}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub algorithm: String,
    pub seed: u64,
    pub dir: PathBuf,
    /// `None` when the cell errored before producing a record.
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.record.as_ref().is_some_and(RunRecord::completed)
    }

    fn status_and_message(&self) -> (&'static str, String) {
        match (&self.record, &self.error) {
            (_, Some(e)) => ("error", e.clone()),
            (Some(r), None) => match &r.status {
                RunStatus::Completed => ("completed", String::new()),
                RunStatus::Failed { reason, .. } => ("failed", reason.clone()),
            },
            (None, None) => ("error", "no record".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub root: PathBuf,
    pub cells: Vec<CellOutcome>,
    pub summary_csv: String,
}

impl ExperimentOutcome {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.succeeded()).count()
    }
}

fn run_cell(
    spec: &AlgorithmSpec,
    seed: u64,
    cfg: &ExperimentConfig,
    data: &SplitDataset,
    root: &Path,
) -> CellOutcome {
    let algorithm = spec.kind.name().to_string();
    let dir = root.join(cell_name(&algorithm, seed));
    let layers = cfg.layers(data);
    let result = run_pruning(spec, cfg.scope, &layers, &cfg.train, seed, data)
        .and_then(|rec| write_run_record(&rec, &dir).map(|()| rec));
    match result {
        Ok(rec) => {
            info!("{} finished: {:?}", dir.display(), rec.status);
            CellOutcome {
                algorithm,
                seed,
                dir,
                record: Some(rec),
                error: None,
            }
        }
        Err(e) => {
            error!("{}: {e}", dir.display());
            CellOutcome {
                algorithm,
                seed,
                dir,
                record: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs every cell of `cfg` under `root`, `workers` at a time (0 = all cores),
/// then writes `summary.csv`, `cells.csv` and an echo of the config.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path, workers: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = cfg.dataset.load()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let _lock = OutputLock::acquire(root)?;
    write_file(&root.join(CONFIG_ECHO), &cfg.to_text())?;

    let jobs: Vec<(AlgorithmSpec, u64)> = cfg
        .algorithm_specs()
        .into_iter()
        .flat_map(|spec| cfg.seeds.iter().map(move |&s| (spec, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let cells: Vec<CellOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|(spec, seed)| run_cell(spec, *seed, cfg, &data, root))
            .collect()
    });

    let inputs: Vec<SummaryInput> = cells
        .iter()
        .map(|c| SummaryInput {
            algorithm: c.algorithm.clone(),
            seed: c.seed,
            rows: c
                .record
                .as_ref()
                .filter(|_| c.succeeded())
                .map(|r| r.iterations.iter().map(csv_rounded).collect()),
        })
        .collect();
    let summary_csv = summarize(&inputs);
    write_file(&root.join(SUMMARY_CSV), &summary_csv)?;
    write_file(&root.join(CELLS_CSV), &cells_csv(&cells))?;
    Ok(ExperimentOutcome {
        root: root.to_path_buf(),
        cells,
        summary_csv,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn cells_csv(cells: &[CellOutcome]) -> String {
    let mut out = String::from("cell,algorithm,seed,status,iterations,d_final,message\n");
    let mut sorted: Vec<&CellOutcome> = cells.iter().collect();
    sorted.sort_by(|a, b| (&a.algorithm, a.seed).cmp(&(&b.algorithm, b.seed)));
    for c in sorted {
        let (status, message) = c.status_and_message();
        let (iters, d_final) = c
            .record
            .as_ref()
            .map(|r| (r.iterations.len().to_string(), r.d_final.to_string()))
            .unwrap_or_default();
        let message = message.replace([',', '\n'], ";");
        out.push_str(&format!(
            "{},{},{},{status},{iters},{d_final},{message}\n",
            cell_name(&c.algorithm, c.seed),
            c.algorithm,
            c.seed
        ));
    }
    out
}

/// The values a row carries once written to and read back from CSV.
fn csv_rounded(it: &IterationMetrics) -> IterationMetrics {
    let r = |x: &mut f64| *x = parse_field(&format_sig(*x)).expect("formatted number parses");
    let mut out = it.clone();
    for x in [
        &mut out.percent_remaining,
        &mut out.acc_retrained,
        &mut out.loss_retrained,
        &mut out.acc_pruned,
        &mut out.loss_pruned,
        &mut out.delta_acc,
    ] {
        r(x);
    }
    for x in [
        &mut out.pqi_retrained,
        &mut out.pqi_pruned,
        &mut out.gini_retrained,
        &mut out.delta_pqi,
    ] {
        if let Some(v) = x.as_mut() {
            r(v);
        }
    }
    out
}

pub(crate) fn metric(it: &IterationMetrics, name: &str) -> Option<f64> {
    match name {
        "d_t" => Some(it.d_t as f64),
        "percent_remaining" => Some(it.percent_remaining),
        "acc_retrained" => Some(it.acc_retrained),
        "loss_retrained" => Some(it.loss_retrained),
        "acc_pruned" => Some(it.acc_pruned),
        "loss_pruned" => Some(it.loss_pruned),
        "pqi_retrained" => it.pqi_retrained,
        "pqi_pruned" => it.pqi_pruned,
        "gini_retrained" => it.gini_retrained,
        "gini_pruned" => it.gini_pruned,
        "delta_acc" => Some(it.delta_acc),
        "delta_pqi" => it.delta_pqi,
        _ => None,
    }
}

/// Mean and sample standard deviation; `None` where undefined.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (Some(mean), Some((ss / (n - 1) as f64).sqrt()))
}

/// One cell as seen by the summary; `rows` is `None` for a failed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryInput {
    pub algorithm: String,
    pub seed: u64,
    pub rows: Option<Vec<IterationMetrics>>,
}

/// Per `(algorithm, t)` mean and sample std over the completed cells.
/// Algorithms are listed by name, failed cells are counted in `n_failed`.
pub fn summarize(cells: &[SummaryInput]) -> String {
    let mut by_alg: BTreeMap<&str, Vec<&SummaryInput>> = BTreeMap::new();
    for c in cells {
        by_alg.entry(&c.algorithm).or_default().push(c);
    }
    let mut out = String::from("algorithm,t,n_runs,n_failed");
    for m in SUMMARY_METRICS {
        out.push_str(&format!(",{m}_mean,{m}_std"));
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_sig).unwrap_or_default();
    for (alg, mut group) in by_alg {
        group.sort_by_key(|c| c.seed);
        let done: Vec<&Vec<IterationMetrics>> = group.iter().filter_map(|c| c.rows.as_ref()).collect();
        let n_failed = group.len() - done.len();
        let len = done.iter().map(|r| r.len()).max().unwrap_or(0);
        if len == 0 {
            out.push_str(&format!("{alg},,0,{n_failed}"));
            out.push_str(&",".repeat(2 * SUMMARY_METRICS.len()));
            out.push('\n');
        }
        for t in 0..len {
            let at_t: Vec<&IterationMetrics> = done.iter().filter_map(|r| r.get(t)).collect();
            out.push_str(&format!("{alg},{t},{},{n_failed}", at_t.len()));
            for m in SUMMARY_METRICS {
                let values: Vec<f64> = at_t.iter().filter_map(|it| metric(it, m)).collect();
                let (mean, std) = mean_std(&values);
                out.push_str(&format!(",{},{}", opt(mean), opt(std)));
            }
            out.push('\n');
        }
    }
    out
}

/// Rebuilds `summary.csv` for an experiment root from its cell directories:
/// status from `run.json`, numbers from `iterations.csv`.
pub fn replay_summary(root: &Path) -> Result<String> {
    let mut inputs = Vec::new();
    for dir in cell_dirs(root)? {
        let rec = read_run_record(&dir)?;
        let rows = if rec.completed() {
            Some(read_iterations_csv(&dir.join(ITERATIONS_CSV))?)
        } else {
            None
        };
        inputs.push(SummaryInput {
            algorithm: rec.config.algorithm.kind.name().to_string(),
            seed: rec.config.seed,
            rows,
        });
    }
    // Cells listed in cells.csv that never produced a record count as failed.
    let cells_path = root.join(CELLS_CSV);
    if cells_path.exists() {
        let text = fs::read_to_string(&cells_path).map_err(|e| Error::io(&cells_path, e))?;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.splitn(7, ',').collect();
            if f.len() == 7 && f[3] == "error" {
                let seed = f[2].parse().map_err(|_| Error::Format {
                    path: cells_path.clone(),
                    offset: 0,
                    message: format!("bad seed in {line:?}"),
                })?;
                if !inputs.iter().any(|i| i.algorithm == f[1] && i.seed == seed) {
                    inputs.push(SummaryInput {
                        algorithm: f[1].to_string(),
                        seed,
                        rows: None,
                    });
                }
            }
        }
    }
    Ok(summarize(&inputs))
}

/// Subdirectories of `root` holding a `run.json`, sorted by name.
pub fn cell_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(RUN_JSON).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}
