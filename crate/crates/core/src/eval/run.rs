use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::dataset::Dataset;
use super::report::EvalReport;
use crate::error::{Error, Result};
use crate::item::OptionLabel;
use crate::strategy::Strategy;
use crate::transcript::{Transcript, TranscriptBuilder};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TXT: &str = "summary.txt";

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Items evaluated concurrently.
    pub parallelism: usize,
    /// Skip items already present in the result log.
    pub resume: bool,
    pub out_dir: PathBuf,
    /// Evaluate only the first N items.
    pub limit: Option<usize>,
}

impl EvalConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { parallelism: 4, resume: false, out_dir: out_dir.into(), limit: None }
    }
}

/// One line of the result log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub item_id: String,
    pub strategy: String,
    pub dataset: String,
    #[serde(default)]
    pub modality: Option<String>,
    pub gold: Option<OptionLabel>,
    pub predicted: Option<OptionLabel>,
    pub correct: bool,
    pub failed: bool,
    pub transcript: Transcript,
}

/// Parses a result log. An unparseable final line without a trailing newline
/// is treated as an interrupted write and skipped.
pub fn read_log(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path)?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() && !complete => {
                warn!(path = %path.display(), line = i + 1, "ignoring truncated final record");
            }
            Err(e) => return Err(Error::Schema { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(records)
}

/// Cuts a partially written last line so appends start on a fresh line.
fn repair_tail(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    warn!(path = %path.display(), dropped = bytes.len() - keep, "truncating partial record");
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    Ok(())
}

fn record_for(dataset: &Dataset, strategy: &str, item_index: usize, transcript: Transcript) -> ResultRecord {
    let item = &dataset.items[item_index];
    let predicted = transcript.label();
    ResultRecord {
        item_id: item.id.clone(),
        strategy: strategy.to_string(),
        dataset: dataset.name.clone(),
        modality: item.modality.clone(),
        gold: item.gold,
        predicted,
        correct: predicted.is_some() && predicted == item.gold,
        failed: transcript.is_failed(),
        transcript,
    }
}

/// Evaluates `dataset`, appending one record per item to `results.jsonl` as
/// items complete, then writes `summary.json` and `summary.txt`. The report is
/// recomputed from the log.
pub async fn run_eval(strategy: &Strategy, dataset: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let log_path = cfg.out_dir.join(RESULTS_FILE);
    let strategy_name = strategy.kind().to_string();
    let dataset = match cfg.limit {
        Some(n) => dataset.truncated(n),
        None => dataset.clone(),
    };

    let done: BTreeSet<String> = if cfg.resume && log_path.exists() {
        repair_tail(&log_path)?;
        read_log(&log_path)?.into_iter().map(|r| r.item_id).collect()
    } else {
        File::create(&log_path)?;
        BTreeSet::new()
    };
    let pending: Vec<usize> = (0..dataset.items.len()).filter(|&i| !done.contains(&dataset.items[i].id)).collect();
    info!(
        dataset = %dataset.name,
        strategy = %strategy_name,
        pending = pending.len(),
        skipped = dataset.items.len() - pending.len(),
        "starting evaluation"
    );

    let mut log = OpenOptions::new().append(true).open(&log_path)?;
    let mut results = stream::iter(pending)
        .map(|i| {
            let item = &dataset.items[i];
            async move {
                let transcript = match strategy.decide(item).await {
                    Ok(t) => t,
                    Err(e) => TranscriptBuilder::new(&item.id, strategy.kind().to_string()).fail(e.to_string()),
                };
                (i, transcript)
            }
        })
        .buffer_unordered(cfg.parallelism.max(1));
    // The loop body is the only writer of the log.
    while let Some((i, transcript)) = results.next().await {
        let record = record_for(&dataset, &strategy_name, i, transcript);
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        log.write_all(line.as_bytes())?;
        log.flush()?;
    }
    drop(results);

    let wanted: BTreeSet<&str> = dataset.items.iter().map(|i| i.id.as_str()).collect();
    let mut seen = BTreeSet::new();
    let records = read_log(&log_path)?;
    let kept = records
        .iter()
        .filter(|r| wanted.contains(r.item_id.as_str()) && seen.insert(r.item_id.clone()));
    let report = EvalReport::from_records(strategy_name, dataset.name.clone(), kept);
    write_summary(&report, &cfg.out_dir)?;
    Ok(report)
}

/// Writes `summary.json` and `summary.txt`; neither contains timestamps.
pub fn write_summary(report: &EvalReport, dir: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(dir.join(SUMMARY_JSON), json)?;
    std::fs::write(dir.join(SUMMARY_TXT), report.to_text())?;
    Ok(())
}
