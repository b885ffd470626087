//! Argument parsing and the four subcommands.
//!
//! Exit codes: 0 success, 1 runtime failure (including audit violations and
//! failed cells), 2 invalid input or an undefined index.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::run_experiment;
use super::report::{build_report, load_runs};
use crate::data::format_sig;
use crate::error::{Error, Result};
use crate::sparsity::{
    audit_measure, directed_robin_hood_search, eta_r, gini_index, pq_index, retained_lower_bound,
    AuditConfig, MeasureSpec, NegativeSearch, NormPair, PropertyReport,
};

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "PQI_PRUNE_OUT";

#[derive(Debug, Parser)]
#[command(name = "pqi-prune", version, about = "PQ Index sparsity measurement and adaptive pruning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureName {
    Pqi,
    Gini,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print PQI, Gini and the retention bound for every r of a vector file.
    Measure {
        /// Newline-separated decimal values.
        file: PathBuf,
        #[arg(short, long, default_value_t = 0.5)]
        p: f64,
        #[arg(short, long, default_value_t = 1.0)]
        q: f64,
    },
    /// Check the six sparsity properties on random vectors.
    Audit {
        #[arg(long, value_enum, default_value_t = MeasureName::Pqi)]
        measure: MeasureName,
        #[arg(short, long, default_value_t = 0.5)]
        p: f64,
        #[arg(short, long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        min_dim: usize,
        #[arg(long, default_value_t = 64)]
        max_dim: usize,
        /// Allow any 0 < p < q and search for a Robin Hood counterexample.
        /// Never affects the exit code.
        #[arg(long)]
        negative: bool,
        /// Largest vector length tried by the directed search.
        #[arg(long, default_value_t = 10_000)]
        search_dim: usize,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every seed x algorithm cell of an experiment.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Concurrent cells; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
        /// Output root; overrides PQI_PRUNE_OUT and the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build per-panel CSVs and trajectory statistics from completed runs.
    Report {
        /// Run directories, or experiment roots containing them.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where to write the report; defaults to the first directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(&cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invalid_input() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs a command, writing its normal output to `out`.
pub fn execute(command: &Command, out: &mut dyn std::io::Write) -> Result<i32> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match command {
        Command::Measure { file, p, q } => {
            let values = read_vector_file(file)?;
            let norms = NormPair::relaxed(*p, *q)?;
            out.write_all(measure_report(&values, norms)?.as_bytes()).map_err(io)?;
            Ok(0)
        }
        Command::Audit {
            measure,
            p,
            q,
            trials,
            seed,
            min_dim,
            max_dim,
            negative,
            search_dim,
            out: json_path,
        } => {
            let cfg = AuditConfig {
                trials: *trials,
                min_dim: *min_dim,
                max_dim: *max_dim,
                seed: *seed,
            };
            if cfg.min_dim < 2 || cfg.max_dim < cfg.min_dim {
                return Err(Error::Domain(format!(
                    "dimension range [{min_dim}, {max_dim}] must satisfy 2 <= min <= max"
                )));
            }
            let (spec, norms) = match measure {
                MeasureName::Gini => (MeasureSpec::Gini, None),
                MeasureName::Pqi => {
                    let norms = if *negative {
                        NormPair::relaxed(*p, *q)?
                    } else {
                        NormPair::new(*p, *q)?
                    };
                    (MeasureSpec::PqIndex { norms }, Some(norms))
                }
            };
            let report = audit_measure(&spec, &cfg);
            let search = match (negative, norms) {
                (true, Some(norms)) => Some(directed_robin_hood_search(norms, *search_dim)),
                _ => None,
            };
            let doc = AuditOutput {
                report: &report,
                negative_search: search.as_ref(),
            };
            let mut json = serde_json::to_string_pretty(&doc).expect("report serializes");
            json.push('\n');
            out.write_all(json.as_bytes()).map_err(io)?;
            if let Some(path) = json_path {
                std::fs::write(path, &json).map_err(|e| Error::io(path, e))?;
            }
            if *negative {
                Ok(0)
            } else {
                Ok(if report.passed() { 0 } else { 1 })
            }
        }
        Command::Run {
            config,
            seed,
            workers,
            out: out_dir,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seeds = vec![*s];
            }
            let root = output_root(out_dir.as_deref(), &cfg.output_dir);
            let workers = workers.unwrap_or(cfg.workers);
            let outcome = run_experiment(&cfg, &root, workers)?;
            out.write_all(summary_table(&outcome.summary_csv).as_bytes())
                .map_err(io)?;
            writeln!(
                out,
                "{} cells written to {} ({} failed)",
                outcome.cells.len(),
                outcome.root.display(),
                outcome.failed_cells()
            )
            .map_err(io)?;
            Ok(if outcome.failed_cells() == 0 { 0 } else { 1 })
        }
        Command::Report { dirs, out: out_dir } => {
            let runs = load_runs(dirs)?;
            let report = build_report(&runs)?;
            let dest = match (out_dir, std::env::var_os(OUT_ENV)) {
                (Some(d), _) => d.clone(),
                (None, Some(env)) => PathBuf::from(env),
                (None, None) => {
                    let first = &dirs[0];
                    if first.is_file() {
                        first.parent().map(Path::to_path_buf).unwrap_or_default()
                    } else {
                        first.clone()
                    }
                }
            };
            report.write(&dest)?;
            out.write_all(report.trajectory_json().as_bytes()).map_err(io)?;
            writeln!(out, "report written to {}", dest.display()).map_err(io)?;
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct AuditOutput<'a> {
    report: &'a PropertyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    negative_search: Option<&'a NegativeSearch>,
}

/// `--out`, then `PQI_PRUNE_OUT`, then the configured directory.
pub fn output_root(flag: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(env) if !env.is_empty() => PathBuf::from(env),
        _ => configured.to_path_buf(),
    }
}

pub fn read_vector_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let field = line.trim();
        if !field.is_empty() {
            let v: f64 = field.parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                offset,
                message: format!("not a decimal number: {field:?}"),
            })?;
            values.push(v);
        }
        offset += line.len();
    }
    Ok(values)
}

/// The text printed by `measure`.
pub fn measure_report(values: &[f64], norms: NormPair) -> Result<String> {
    let index = pq_index(values, norms)?;
    let gini = gini_index(values)?;
    let d = values.len();
    let mut s = String::new();
    let _ = writeln!(s, "d = {d}");
    let _ = writeln!(s, "p = {}", format_sig(norms.p()));
    let _ = writeln!(s, "q = {}", format_sig(norms.q()));
    let _ = writeln!(s, "pqi = {}", format_sig(index));
    let _ = writeln!(s, "pqi_max = {}", format_sig(norms.max_index(d)));
    let _ = writeln!(s, "gini = {}", format_sig(gini));
    if !norms.is_valid_regime() {
        let _ = writeln!(s, "bound: not available outside 0 < p <= 1 <= q");
        return Ok(s);
    }
    let _ = writeln!(s, "r,eta_r,bound,holds");
    for r in 1..=d {
        let eta = eta_r(values, norms.p(), r)?;
        let bound = retained_lower_bound(d as f64, index, eta, norms);
        let _ = writeln!(
            s,
            "{r},{},{},{}",
            format_sig(eta),
            format_sig(bound),
            r as f64 >= bound
        );
    }
    Ok(s)
}

/// Renders `summary.csv` as `mean ± std` of remaining weights and accuracy.
pub fn summary_table(summary_csv: &str) -> String {
    let mut lines = summary_csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let wanted = ["percent_remaining", "acc_retrained", "acc_pruned", "pqi_retrained"];
    let mut s = format!("{:<16}{:>4}{:>6}", "algorithm", "t", "runs");
    for w in wanted {
        let _ = write!(s, "{w:>26}");
    }
    s.push('\n');
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let get = |name: &str| col(name).and_then(|i| f.get(i).copied()).unwrap_or("");
        let _ = write!(s, "{:<16}{:>4}{:>6}", get("algorithm"), get("t"), get("n_runs"));
        for w in wanted {
            let mean = get(&format!("{w}_mean"));
            let std = get(&format!("{w}_std"));
            let cell = match (mean.parse::<f64>(), std.parse::<f64>()) {
                (Ok(m), Ok(sd)) => format!("{m:.4} ± {sd:.4}"),
                (Ok(m), Err(_)) => format!("{m:.4}"),
                _ => "-".to_string(),
            };
            let _ = write!(s, "{cell:>26}");
        }
        s.push('\n');
    }
    s
}
