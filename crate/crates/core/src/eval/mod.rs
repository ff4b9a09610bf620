//! Dataset loading, batched evaluation with resume, and accuracy reports.

mod dataset;
mod report;
mod run;

pub use dataset::{load_dataset, Dataset};
pub use report::{compute_gap, format_gap, format_pct, format_table, EvalReport, ModalityStats};
pub use run::{read_log, run_eval, write_summary, EvalConfig, ResultRecord, RESULTS_FILE, SUMMARY_JSON, SUMMARY_TXT};
