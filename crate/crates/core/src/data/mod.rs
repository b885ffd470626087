//! Datasets and run-record persistence.

mod format;
mod idx;
mod record;
mod synthetic;

pub use format::{format_sig, parse_field};
pub use idx::{load_idx, write_idx_images, write_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use record::{
    read_iterations_csv, read_run_record, write_run_record, GroupLog, IterationMetrics, OutputLock,
    RunConfig, RunEvent, RunRecord, RunStatus, CSV_HEADER, ITERATIONS_CSV, RUN_JSON,
};
pub use synthetic::{gen_synthetic, SplitDataset, SyntheticSpec};
