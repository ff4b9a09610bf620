use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::run::ResultRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityStats {
    pub n: usize,
    pub n_correct: usize,
    pub n_failed: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub dataset: String,
    pub n_total: usize,
    pub n_correct: usize,
    pub n_failed: usize,
    /// `n_correct / (n_total - n_failed)`, 0 when nothing was decided.
    pub accuracy: f64,
    pub per_modality: BTreeMap<String, ModalityStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_single_agent: Option<BTreeMap<String, f64>>,
    /// (gain over the worst single agent, gain over the best one)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_min_gap: Option<(f64, f64)>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(ours - worst, ours - best)`; `None` without single-agent numbers.
pub fn compute_gap(ours: f64, singles: &BTreeMap<String, f64>) -> Option<(f64, f64)> {
    let worst = singles.values().copied().reduce(f64::min)?;
    let best = singles.values().copied().reduce(f64::max)?;
    Some((ours - worst, ours - best))
}

fn signed(v: f64) -> String {
    let s = format!("{v:+.2}");
    if s == "-0.00" {
        "+0.00".into()
    } else {
        s
    }
}

/// `+14.39/+2.64` from gaps in percentage points.
pub fn format_gap(gap: (f64, f64)) -> String {
    format!("{}/{}", signed(gap.0), signed(gap.1))
}

/// Fraction in [0, 1] as a percentage with two decimals.
pub fn format_pct(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

impl EvalReport {
    pub fn empty(strategy: impl Into<String>, dataset: impl Into<String>) -> Self {
        Self {
            strategy: strategy.into(),
            dataset: dataset.into(),
            n_total: 0,
            n_correct: 0,
            n_failed: 0,
            accuracy: 0.0,
            per_modality: BTreeMap::new(),
            per_single_agent: None,
            max_min_gap: None,
        }
    }

    pub fn from_records<'a>(
        strategy: impl Into<String>,
        dataset: impl Into<String>,
        records: impl IntoIterator<Item = &'a ResultRecord>,
    ) -> Self {
        let mut report = Self::empty(strategy, dataset);
        for r in records {
            report.n_total += 1;
            report.n_failed += usize::from(r.failed);
            report.n_correct += usize::from(r.correct);
            let modality = r.modality.clone().unwrap_or_else(|| "unspecified".into());
            let m = report.per_modality.entry(modality).or_insert(ModalityStats {
                n: 0,
                n_correct: 0,
                n_failed: 0,
                accuracy: 0.0,
            });
            m.n += 1;
            m.n_failed += usize::from(r.failed);
            m.n_correct += usize::from(r.correct);
        }
        for m in report.per_modality.values_mut() {
            m.accuracy = ratio(m.n_correct, m.n - m.n_failed);
        }
        report.accuracy = ratio(report.n_correct, report.n_total - report.n_failed);
        report
    }

    /// Attaches single-agent accuracies (fractions) and the resulting gap.
    pub fn with_singles(mut self, singles: BTreeMap<String, f64>) -> Self {
        self.max_min_gap = compute_gap(self.accuracy, &singles);
        self.per_single_agent = if singles.is_empty() { None } else { Some(singles) };
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "strategy  {}", self.strategy);
        let _ = writeln!(out, "dataset   {}", self.dataset);
        let _ = writeln!(
            out,
            "items     {} total, {} correct, {} failed",
            self.n_total, self.n_correct, self.n_failed
        );
        let _ = writeln!(out, "accuracy  {}%", format_pct(self.accuracy));
        if !self.per_modality.is_empty() {
            let _ = writeln!(out, "\nmodality        n  failed  accuracy");
            for (name, m) in &self.per_modality {
                let _ = writeln!(out, "{name:<12} {:>4}  {:>6}  {:>7}%", m.n, m.n_failed, format_pct(m.accuracy));
            }
        }
        if let Some(singles) = &self.per_single_agent {
            let _ = writeln!(out, "\nsingle agent    accuracy");
            for (id, acc) in singles {
                let _ = writeln!(out, "{id:<15} {:>7}%", format_pct(*acc));
            }
        }
        if let Some((max, min)) = self.max_min_gap {
            let _ = writeln!(out, "\nmax/min gap  {}", format_gap((max * 100.0, min * 100.0)));
        }
        out
    }
}

/// Method rows by dataset columns, accuracies in percent; a gap row follows
/// each method that has single-agent numbers.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !methods.contains(&r.strategy.as_str()) {
            methods.push(&r.strategy);
        }
    }
    let width = datasets.iter().map(|d| d.len()).max().unwrap_or(0).max(13);
    let label_width = methods.iter().map(|m| m.len() + 2).max().unwrap_or(0).max(8);
    let find = |m: &str, d: &str| reports.iter().find(|r| r.strategy == m && r.dataset == d);

    let mut out = format!("{:<label_width$}", "method");
    for d in &datasets {
        let _ = write!(out, " {d:>width$}");
    }
    out.push('\n');
    for m in &methods {
        let _ = write!(out, "{m:<label_width$}");
        for d in &datasets {
            let cell = find(m, d).map(|r| format_pct(r.accuracy)).unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell:>width$}");
        }
        out.push('\n');
        if datasets.iter().any(|d| find(m, d).is_some_and(|r| r.max_min_gap.is_some())) {
            let _ = write!(out, "{:<label_width$}", "  gap");
            for d in &datasets {
                let cell = find(m, d)
                    .and_then(|r| r.max_min_gap)
                    .map(|(a, b)| format_gap((a * 100.0, b * 100.0)))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, " {cell:>width$}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singles(v: &[f64]) -> BTreeMap<String, f64> {
        v.iter().enumerate().map(|(i, a)| (format!("s{i}"), *a)).collect()
    }

    #[test]
    fn gap_examples() {
        let g = compute_gap(66.98, &singles(&[64.34, 52.59, 63.39])).unwrap();
        assert_eq!(format_gap(g), "+14.39/+2.64");
        let g = compute_gap(70.0, &singles(&[70.0, 60.0])).unwrap();
        assert_eq!(g.1, 0.0);
        assert_eq!(format_gap(g), "+10.00/+0.00");
        let g = compute_gap(60.0, &singles(&[61.44, 50.0])).unwrap();
        assert_eq!(format_gap(g), "+10.00/-1.44");
        assert_eq!(compute_gap(1.0, &BTreeMap::new()), None);
    }

    #[test]
    fn empty_report_has_zero_accuracy() {
        let r = EvalReport::from_records("voting", "d", []);
        assert_eq!((r.n_total, r.accuracy), (0, 0.0));
        assert!(r.to_text().contains("0.00%"));
        let r = r.with_singles(BTreeMap::new());
        assert!(r.max_min_gap.is_none() && r.per_single_agent.is_none());
    }

    #[test]
    fn table_layout() {
        let mut a = EvalReport::empty("medorch", "vqa-rad");
        a.accuracy = 0.7928;
        a.max_min_gap = Some((0.1, -0.02));
        let mut b = EvalReport::empty("voting", "vqa-rad");
        b.accuracy = 0.75;
        let mut c = EvalReport::empty("medorch", "slake");
        c.accuracy = 0.5;
        let t = format_table(&[a, b, c]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4, "{t}");
        assert!(lines[0].contains("vqa-rad") && lines[0].contains("slake"));
        assert!(lines[1].starts_with("medorch") && lines[1].contains("79.28") && lines[1].contains("50.00"));
        assert!(lines[2].contains("+10.00/-2.00") && lines[2].trim_end().ends_with('-'));
        assert!(lines[3].starts_with("voting") && lines[3].contains("75.00"));
    }
}
