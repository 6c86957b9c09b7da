use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Baseline,
    Chain,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Chain => "chain",
        }
    }

    /// Metric names reported for this mode, in output order.
    pub fn metrics(&self) -> &'static [&'static str] {
        match self {
            Mode::Baseline => &["val_accuracy", "test_accuracy"],
            Mode::Chain => &[
                "best_val_accuracy",
                "best_test_accuracy",
                "final_val_accuracy",
                "final_test_accuracy",
            ],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "chain" => Ok(Mode::Chain),
            _ => Err(Error::invalid(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Skipped,
    Failed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Skipped => "skipped",
            Status::Failed => "failed",
        }
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(Status::Ok),
            "skipped" => Ok(Status::Skipped),
            "failed" => Ok(Status::Failed),
            _ => Err(Error::invalid(format!("unknown status {s:?}"))),
        }
    }
}

/// Outcome of one `(fraction, run, mode)` cell.
///
/// For chain rows `val_accuracy`/`test_accuracy` belong to the best iteration
/// by validation and the `final_*` fields to the last one. Baseline rows leave
/// `best_iteration` and `final_*` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub fraction: f64,
    pub run: usize,
    pub mode: Mode,
    pub status: Status,
    pub seed: u64,
    pub best_iteration: Option<usize>,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub reason: String,
}

impl RunRow {
    pub fn skipped(
        fraction: f64,
        run: usize,
        mode: Mode,
        seed: u64,
        reason: impl Into<String>,
    ) -> Self {
        Self {
            fraction,
            run,
            mode,
            status: Status::Skipped,
            seed,
            best_iteration: None,
            val_accuracy: None,
            test_accuracy: None,
            final_val_accuracy: None,
            final_test_accuracy: None,
            reason: reason.into(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "val_accuracy" | "best_val_accuracy" => self.val_accuracy,
            "test_accuracy" | "best_test_accuracy" => self.test_accuracy,
            "final_val_accuracy" => self.final_val_accuracy,
            "final_test_accuracy" => self.final_test_accuracy,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n = 1.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Option<Stats> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Stats {
        n,
        mean: mean.clamp(min, max),
        std,
        min,
        max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub fraction: f64,
    pub mode: Mode,
    pub metric: &'static str,
    /// `None` when no run of the group completed.
    pub stats: Option<Stats>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub cells: Vec<SummaryCell>,
    /// Per-run detail, sorted by fraction, mode, run.
    pub rows: Vec<RunRow>,
}

impl RunSummary {
    pub fn cell(&self, fraction: f64, mode: Mode, metric: &str) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.fraction == fraction && c.mode == mode && c.metric == metric)
    }

    pub fn mean(&self, fraction: f64, mode: Mode, metric: &str) -> Option<f64> {
        self.cell(fraction, mode, metric)
            .and_then(|c| c.stats)
            .map(|s| s.mean)
    }
}

fn row_order(a: &RunRow, b: &RunRow) -> std::cmp::Ordering {
    a.fraction
        .total_cmp(&b.fraction)
        .then(a.mode.cmp(&b.mode))
        .then(a.run.cmp(&b.run))
}

/// Mean, sample std, min and max of every metric per `(fraction, mode)`,
/// over the rows whose status is `ok`. A group with no completed run
/// yields a cell without stats and a warning note.
pub fn aggregate_runs(rows: &[RunRow]) -> RunSummary {
    let mut rows = rows.to_vec();
    rows.sort_by(row_order);

    let mut cells = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (rows[start].fraction, rows[start].mode);
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| (r.fraction, r.mode) == key)
                .count();
        let group = &rows[start..end];
        for &metric in key.1.metrics() {
            let values: Vec<f64> = group
                .iter()
                .filter(|r| r.status == Status::Ok)
                .filter_map(|r| r.metric(metric))
                .collect();
            let stats = summarize(&values);
            let note = match stats {
                None => "warning: no completed runs".to_string(),
                Some(s) if s.n == 1 => "n=1".to_string(),
                Some(s) if s.n < group.len() => format!("{} of {} runs", s.n, group.len()),
                Some(_) => String::new(),
            };
            cells.push(SummaryCell {
                fraction: key.0,
                mode: key.1,
                metric,
                stats,
                note,
            });
        }
        start = end;
    }
    RunSummary { cells, rows }
}
