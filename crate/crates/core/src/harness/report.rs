//! Per-panel CSVs over completed runs and trajectory statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiment::{cell_dirs, mean_std, metric};
use crate::data::{format_sig, read_run_record, IterationMetrics, RunRecord, RUN_JSON};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, TrainConfig};
use crate::pruning::Scope;

pub const PANEL_PERFORMANCE: &str = "panel_performance.csv";
pub const PANEL_REMAINING: &str = "panel_remaining.csv";
pub const PANEL_PQI: &str = "panel_pqi.csv";
pub const PANEL_GINI: &str = "panel_gini.csv";
pub const TRAJECTORY_STATS: &str = "trajectory_stats.json";

/// Statistics of one PQI trajectory against its Gini trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub pqi_argmin: Option<usize>,
    pub pqi_argmax: Option<usize>,
    pub spearman_pqi_gini: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrajectory {
    pub seed: u64,
    #[serde(flatten)]
    pub stats: TrajectoryStats,
}

/// Statistics of the seed-mean retrained trajectory, plus each run's own.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesStats {
    pub n_runs: usize,
    #[serde(flatten)]
    pub mean: TrajectoryStats,
    pub runs: Vec<RunTrajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub panel_performance: String,
    pub panel_remaining: String,
    pub panel_pqi: String,
    pub panel_gini: String,
    /// Keyed by algorithm name.
    pub trajectories: BTreeMap<String, SeriesStats>,
}

impl Report {
    pub fn trajectory_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.trajectories).expect("stats serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            (PANEL_PERFORMANCE, &self.panel_performance),
            (PANEL_REMAINING, &self.panel_remaining),
            (PANEL_PQI, &self.panel_pqi),
            (PANEL_GINI, &self.panel_gini),
            (TRAJECTORY_STATS, &self.trajectory_json()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Index of the first smallest / largest defined entry.
pub fn argmin_argmax(values: &[Option<f64>]) -> (Option<usize>, Option<usize>) {
    let mut lo: Option<(usize, f64)> = None;
    let mut hi: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let Some(v) = *v else { continue };
        if lo.is_none_or(|(_, m)| v < m) {
            lo = Some((i, v));
        }
        if hi.is_none_or(|(_, m)| v > m) {
            hi = Some((i, v));
        }
    }
    (lo.map(|p| p.0), hi.map(|p| p.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman's rank correlation; `None` for fewer than two points or a
/// constant series.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn trajectory_stats(pqi: &[Option<f64>], gini: &[Option<f64>]) -> TrajectoryStats {
    let (pqi_argmin, pqi_argmax) = argmin_argmax(pqi);
    let (xs, ys): (Vec<f64>, Vec<f64>) = pqi
        .iter()
        .zip(gini)
        .filter_map(|(a, b)| a.zip(*b))
        .unzip();
    TrajectoryStats {
        pqi_argmin,
        pqi_argmax,
        spearman_pqi_gini: spearman(&xs, &ys),
    }
}

/// Everything but the seed and algorithm must agree across runs.
fn comparable_config(rec: &RunRecord) -> (Scope, Vec<LayerSpec>, TrainConfig, usize) {
    let train = TrainConfig {
        seed: 0,
        ..rec.config.train
    };
    (
        rec.config.scope,
        rec.config.layers.clone(),
        train,
        rec.config.algorithm.iterations,
    )
}

/// Loads records from cell directories or from experiment roots holding them.
pub fn load_runs(paths: &[PathBuf]) -> Result<Vec<RunRecord>> {
    let mut dirs = Vec::new();
    for p in paths {
        if p.join(RUN_JSON).is_file() || p.is_file() {
            dirs.push(p.clone());
        } else {
            let found = cell_dirs(p)?;
            if found.is_empty() {
                return Err(Error::Config(format!("no runs under {}", p.display())));
            }
            dirs.extend(found);
        }
    }
    dirs.iter().map(|d| read_run_record(d)).collect()
}

fn remaining_pruned(it: &IterationMetrics, d_0: usize) -> f64 {
    (it.d_t - it.pruned_total) as f64 / d_0 as f64
}

pub fn build_report(runs: &[RunRecord]) -> Result<Report> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Config("no runs to report on".into()))?;
    let mut by_alg: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for rec in runs {
        if !rec.completed() {
            return Err(Error::Config(format!(
                "run {} seed {} did not complete: {:?}",
                rec.config.algorithm.kind.name(),
                rec.config.seed,
                rec.status
            )));
        }
        if comparable_config(rec) != comparable_config(first) {
            return Err(Error::Config(format!(
                "mixed configurations: {:?} vs {:?}",
                comparable_config(rec),
                comparable_config(first)
            )));
        }
        let name = rec.config.algorithm.kind.name();
        let series = by_alg.entry(name).or_default();
        if let Some(other) = series.first() {
            if other.config.algorithm != rec.config.algorithm {
                return Err(Error::Config(format!(
                    "mixed {name} settings: {:?} vs {:?}",
                    other.config.algorithm, rec.config.algorithm
                )));
            }
            if series.iter().any(|r| r.config.seed == rec.config.seed) {
                return Err(Error::Config(format!(
                    "{name} seed {} given twice",
                    rec.config.seed
                )));
            }
        }
        series.push(rec);
    }
    for series in by_alg.values_mut() {
        series.sort_by_key(|r| r.config.seed);
    }

    type Getter = fn(&IterationMetrics, usize) -> Option<f64>;
    let panel = |columns: &[(&str, Getter)]| -> String {
        let mut out = String::from("algorithm,t,n_runs");
        for (name, _) in columns {
            out.push_str(&format!(",{name}_mean,{name}_std"));
        }
        out.push('\n');
        for (alg, series) in &by_alg {
            let len = series.iter().map(|r| r.iterations.len()).max().unwrap_or(0);
            for t in 0..len {
                let at_t: Vec<(&IterationMetrics, usize)> = series
                    .iter()
                    .filter_map(|r| r.iterations.get(t).map(|it| (it, r.d_0)))
                    .collect();
                out.push_str(&format!("{alg},{t},{}", at_t.len()));
                for (_, get) in columns {
                    let values: Vec<f64> = at_t.iter().filter_map(|(it, d0)| get(it, *d0)).collect();
                    let (m, s) = mean_std(&values);
                    let f = |v: Option<f64>| v.map(format_sig).unwrap_or_default();
                    out.push_str(&format!(",{},{}", f(m), f(s)));
                }
                out.push('\n');
            }
        }
        out
    };

    let panel_performance = panel(&[
        ("acc_retrained", |it, _| metric(it, "acc_retrained")),
        ("acc_pruned", |it, _| metric(it, "acc_pruned")),
        ("loss_retrained", |it, _| metric(it, "loss_retrained")),
        ("loss_pruned", |it, _| metric(it, "loss_pruned")),
    ]);
    let panel_remaining = panel(&[
        ("remaining_retrained", |it, d0| Some(it.d_t as f64 / d0 as f64)),
        ("remaining_pruned", |it, d0| Some(remaining_pruned(it, d0))),
    ]);
    let panel_pqi = panel(&[
        ("pqi_retrained", |it, _| it.pqi_retrained),
        ("pqi_pruned", |it, _| it.pqi_pruned),
    ]);
    let panel_gini = panel(&[
        ("gini_retrained", |it, _| it.gini_retrained),
        ("gini_pruned", |it, _| it.gini_pruned),
    ]);

    let mut trajectories = BTreeMap::new();
    for (alg, series) in &by_alg {
        let runs: Vec<RunTrajectory> = series
            .iter()
            .map(|r| {
                let pqi: Vec<_> = r.iterations.iter().map(|it| it.pqi_retrained).collect();
                let gini: Vec<_> = r.iterations.iter().map(|it| it.gini_retrained).collect();
                RunTrajectory {
                    seed: r.config.seed,
                    stats: trajectory_stats(&pqi, &gini),
                }
            })
            .collect();
        let len = series.iter().map(|r| r.iterations.len()).max().unwrap_or(0);
        let mean_at = |t: usize, f: fn(&IterationMetrics) -> Option<f64>| {
            let v: Vec<f64> = series
                .iter()
                .filter_map(|r| r.iterations.get(t).and_then(f))
                .collect();
            mean_std(&v).0
        };
        let pqi: Vec<_> = (0..len).map(|t| mean_at(t, |it| it.pqi_retrained)).collect();
        let gini: Vec<_> = (0..len).map(|t| mean_at(t, |it| it.gini_retrained)).collect();
        trajectories.insert(
            alg.to_string(),
            SeriesStats {
                n_runs: series.len(),
                mean: trajectory_stats(&pqi, &gini),
                runs,
            },
        );
    }

    Ok(Report {
        panel_performance,
        panel_remaining,
        panel_pqi,
        panel_gini,
        trajectories,
    })
}
