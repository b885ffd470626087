//! Experiment configuration, batch orchestration, reports and the CLI.

pub mod cli;
mod config;
mod experiment;
mod report;

pub use config::{AlgorithmName, DatasetSource, ExperimentConfig};
pub use experiment::{
    cell_dirs, cell_name, mean_std, replay_summary, run_experiment, summarize, CellOutcome,
    ExperimentOutcome, SummaryInput, CELLS_CSV, CONFIG_ECHO, SUMMARY_CSV, SUMMARY_METRICS,
};
pub use report::{
    argmin_argmax, average_ranks, build_report, load_runs, spearman, trajectory_stats, Report,
    RunTrajectory, SeriesStats, TrajectoryStats, PANEL_GINI, PANEL_PERFORMANCE, PANEL_PQI,
    PANEL_REMAINING, TRAJECTORY_STATS,
};
