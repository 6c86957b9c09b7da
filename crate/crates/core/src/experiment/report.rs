//! Output files of an experiment directory.
//!
//! | file | content |
//! |---|---|
//! | `config.txt` | effective configuration, re-readable with `--config` |
//! | `runs.csv` | one row per `(fraction, run, mode)`, full precision |
//! | `summary.csv` | mean / std / min / max per `(fraction, mode, metric)` |
//! | `traces.csv` | one row per chain iteration |
//! | `confusion_<fraction>_<run>.csv` | test confusion of the chain's selected model |
//! | `confusion_baseline_<fraction>_<run>.csv` | test confusion of the baseline |
//! | `pseudo_<fraction>_<run>_<iteration>.csv` | filtered pseudo-labels, on request |
//! | `chain_curves.svg` | test accuracy per iteration, one panel per fraction |
//!
//! `summary.csv` and `chain_curves.svg` are functions of `runs.csv` and
//! `traces.csv` alone; [`report`] rebuilds them byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::aggregate::{aggregate_runs, Mode, RunRow, RunSummary, Status};
use super::runner::{ExperimentOutput, TraceRow};
use crate::dataset::ClassCatalog;
use crate::distill::write_pseudo_labels;
use crate::learner::ConfusionMatrix;
use crate::{Error, Result};

pub const RUNS_HEADER: [&str; 11] = [
    "fraction",
    "run",
    "mode",
    "status",
    "seed",
    "best_iteration",
    "val_accuracy",
    "test_accuracy",
    "final_val_accuracy",
    "final_test_accuracy",
    "reason",
];
pub const SUMMARY_HEADER: &str = "fraction,mode,metric,n,mean,std,min,max,note";
pub const TRACES_HEADER: &str =
    "run,fraction,iteration,val_accuracy,test_accuracy,pseudo_count,pseudo_agreement";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            source_name: path.display().to_string(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_runs_csv(rows: &[RunRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::invalid(format!("runs.csv: {e}"));
    w.write_record(RUNS_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.fraction.to_string(),
            r.run.to_string(),
            r.mode.to_string(),
            r.status.as_str().to_string(),
            r.seed.to_string(),
            opt(r.best_iteration),
            opt(r.val_accuracy),
            opt(r.test_accuracy),
            opt(r.final_val_accuracy),
            opt(r.final_test_accuracy),
            r.reason.clone(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(RUNS_HEADER) {
        return Err(Error::Parse {
            source_name: path.display().to_string(),
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |field: &str| Error::Parse {
            source_name: path.display().to_string(),
            line,
            message: format!("invalid {field}"),
        };
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<Option<f64>> {
            match get(i) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(RUNS_HEADER[i])),
            }
        };
        rows.push(RunRow {
            fraction: get(0).parse().map_err(|_| bad("fraction"))?,
            run: get(1).parse().map_err(|_| bad("run"))?,
            mode: get(2).parse::<Mode>().map_err(|_| bad("mode"))?,
            status: get(3).parse::<Status>().map_err(|_| bad("status"))?,
            seed: get(4).parse().map_err(|_| bad("seed"))?,
            best_iteration: match get(5) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("best_iteration"))?),
            },
            val_accuracy: num(6)?,
            test_accuracy: num(7)?,
            final_val_accuracy: num(8)?,
            final_test_accuracy: num(9)?,
            reason: get(10).to_string(),
        });
    }
    Ok(rows)
}

pub fn format_summary_csv(summary: &RunSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SUMMARY_HEADER}");
    for c in &summary.cells {
        let stats = match c.stats {
            Some(st) => format!(
                "{},{:.6},{:.6},{:.6},{:.6}",
                st.n, st.mean, st.std, st.min, st.max
            ),
            None => "0,,,,".to_string(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            c.fraction, c.mode, c.metric, stats, c.note
        );
    }
    s
}

pub fn format_traces_csv(traces: &[TraceRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TRACES_HEADER}");
    for t in traces {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            t.run,
            t.fraction,
            t.iteration,
            t.val_accuracy,
            t.test_accuracy,
            t.pseudo_count,
            opt(t.pseudo_agreement)
        );
    }
    s
}

pub fn read_traces_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |line: usize, message: String| Error::Parse {
        source_name: path.display().to_string(),
        line,
        message,
    };
    if lines.next() != Some(TRACES_HEADER) {
        return Err(bad(1, "unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(n, format!("expected 7 fields, got {}", f.len())));
        }
        let p = |k: usize| bad(n, format!("invalid field {:?}", f[k]));
        out.push(TraceRow {
            run: f[0].parse().map_err(|_| p(0))?,
            fraction: f[1].parse().map_err(|_| p(1))?,
            iteration: f[2].parse().map_err(|_| p(2))?,
            val_accuracy: f[3].parse().map_err(|_| p(3))?,
            test_accuracy: f[4].parse().map_err(|_| p(4))?,
            pseudo_count: f[5].parse().map_err(|_| p(5))?,
            pseudo_agreement: match f[6] {
                "" => None,
                s => Some(s.parse().map_err(|_| p(6))?),
            },
        });
    }
    Ok(out)
}

pub fn format_confusion_csv(confusion: &ConfusionMatrix, catalog: &ClassCatalog) -> String {
    let mut s = String::from("truth");
    for name in catalog.names() {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (i, row) in confusion.counts().iter().enumerate() {
        s.push_str(catalog.name(i).unwrap_or("?"));
        for c in row {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Test accuracy per iteration, one panel per labelled fraction and one
/// polyline per run. The dashed line is the best mean baseline test
/// accuracy over all fractions.
pub fn render_chain_svg(traces: &[TraceRow], summary: &RunSummary) -> String {
    const PW: f64 = 260.0;
    const PH: f64 = 200.0;
    const M: f64 = 40.0;

    let mut fractions: Vec<f64> = traces.iter().map(|t| t.fraction).collect();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let reference = summary
        .cells
        .iter()
        .filter(|c| c.mode == Mode::Baseline && c.metric == "test_accuracy")
        .filter_map(|c| c.stats.map(|s| s.mean))
        .fold(None, |acc: Option<f64>, m| {
            Some(acc.map_or(m, |a| a.max(m)))
        });

    let mut lo = traces
        .iter()
        .map(|t| t.test_accuracy)
        .fold(f64::INFINITY, f64::min);
    let mut hi = traces
        .iter()
        .map(|t| t.test_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(r) = reference {
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(0.005);
    let (lo, hi) = ((lo - pad).max(0.0), (hi + pad).min(1.0));
    let max_iter = traces.iter().map(|t| t.iteration).max().unwrap_or(1).max(1);

    let panels = fractions.len().max(1);
    let width = M + panels as f64 * (PW + M);
    let height = PH + 2.0 * M + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if fractions.is_empty() {
        let _ = writeln!(s, r#"<text x="{M}" y="{M}">no chain traces</text>"#);
    }
    for (k, &fraction) in fractions.iter().enumerate() {
        let x0 = M + k as f64 * (PW + M);
        let y0 = M;
        let px = |it: usize| x0 + PW * it as f64 / max_iter as f64;
        let py = |acc: f64| y0 + PH * (hi - acc) / (hi - lo);
        let _ = writeln!(
            s,
            r##"<g><rect x="{x0}" y="{y0}" width="{PW}" height="{PH}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">labelled fraction {fraction}</text>"#,
            x0 + PW / 2.0,
            y0 - 8.0
        );
        for it in 0..=max_iter {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{it}</text>"#,
                px(it),
                y0 + PH + 14.0
            );
        }
        for v in [lo, (lo + hi) / 2.0, hi] {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
                x0 - 4.0,
                py(v) + 4.0
            );
        }
        let mut runs: Vec<usize> = traces
            .iter()
            .filter(|t| t.fraction == fraction)
            .map(|t| t.run)
            .collect();
        runs.sort_unstable();
        runs.dedup();
        for run in runs {
            let points: Vec<String> = traces
                .iter()
                .filter(|t| t.fraction == fraction && t.run == run)
                .map(|t| format!("{:.2},{:.2}", px(t.iteration), py(t.test_accuracy)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>run {run}</title></polyline>"#,
                PALETTE[run % PALETTE.len()],
                points.join(" ")
            );
        }
        if let Some(r) = reference {
            let _ = writeln!(
                s,
                r#"<line x1="{x0}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="black" stroke-dasharray="4 3"><title>best baseline mean {r}</title></line>"#,
                x0 + PW,
                y = py(r)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration (0 = teacher); y: test accuracy; dashed: best baseline mean</text>"#,
        width / 2.0,
        height - 8.0
    );
    s.push_str("</svg>\n");
    s
}

fn write_derived(dir: &Path, summary: &RunSummary, traces: &[TraceRow]) -> Result<()> {
    write_file(&dir.join("summary.csv"), &format_summary_csv(summary))?;
    write_file(
        &dir.join("chain_curves.svg"),
        &render_chain_svg(traces, summary),
    )
}

/// Writes every output file into `dir`, creating it if needed.
pub fn emit_outputs(dir: &Path, output: &ExperimentOutput) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("config.txt"), &output.config.to_config_string())?;
    write_file(&dir.join("runs.csv"), &format_runs_csv(&output.rows)?)?;
    write_file(&dir.join("traces.csv"), &format_traces_csv(&output.traces))?;
    for c in &output.confusions {
        let name = match c.mode {
            Mode::Chain => format!("confusion_{}_{}.csv", c.fraction, c.run),
            Mode::Baseline => format!("confusion_baseline_{}_{}.csv", c.fraction, c.run),
        };
        write_file(
            &dir.join(name),
            &format_confusion_csv(&c.confusion, &output.catalog),
        )?;
    }
    for d in &output.pseudo_labels {
        let path = dir.join(format!(
            "pseudo_{}_{}_{}.csv",
            d.fraction, d.run, d.iteration
        ));
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_pseudo_labels(f, &d.labels, output.catalog.len())?;
    }
    let summary = aggregate_runs(&output.rows);
    write_derived(dir, &summary, &output.traces)?;
    Ok(summary)
}

/// Re-aggregates `runs.csv` and `traces.csv` of a finished experiment and
/// rewrites `summary.csv` and `chain_curves.svg`.
pub fn report(dir: &Path) -> Result<RunSummary> {
    let rows = read_runs_csv(&dir.join("runs.csv"))?;
    let traces_path = dir.join("traces.csv");
    let traces = if traces_path.exists() {
        read_traces_csv(&traces_path)?
    } else {
        Vec::new()
    };
    let summary = aggregate_runs(&rows);
    write_derived(dir, &summary, &traces)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<RunRow> {
        vec![
            RunRow {
                fraction: 0.01,
                run: 0,
                mode: Mode::Baseline,
                status: Status::Ok,
                seed: u64::MAX,
                best_iteration: None,
                val_accuracy: Some(0.1 + 0.2),
                test_accuracy: Some(1.0 / 3.0),
                final_val_accuracy: None,
                final_test_accuracy: None,
                reason: String::new(),
            },
            RunRow::skipped(1.0, 0, Mode::Chain, 7, "split: \"quoted\", with comma"),
        ]
    }

    #[test]
    fn runs_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let text = format_runs_csv(&rows()).unwrap();
        fs::write(&path, &text).unwrap();
        assert_eq!(read_runs_csv(&path).unwrap(), rows());
        assert!(text.starts_with("fraction,run,mode,status,seed,"));
    }

    #[test]
    fn traces_round_trip() {
        let traces = vec![
            TraceRow {
                run: 0,
                fraction: 0.01,
                iteration: 0,
                val_accuracy: 0.25,
                test_accuracy: 0.3,
                pseudo_count: 0,
                pseudo_agreement: None,
            },
            TraceRow {
                run: 0,
                fraction: 0.01,
                iteration: 1,
                val_accuracy: 0.5,
                test_accuracy: 0.1 + 0.2,
                pseudo_count: 12,
                pseudo_agreement: Some(2.0 / 3.0),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        fs::write(&path, format_traces_csv(&traces)).unwrap();
        assert_eq!(read_traces_csv(&path).unwrap(), traces);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACES_HEADER);
        assert!(text.lines().nth(1).unwrap().ends_with(",0,"));
    }

    #[test]
    fn summary_format() {
        let s = format_summary_csv(&aggregate_runs(&rows()));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(
            lines[1],
            "0.01,baseline,val_accuracy,1,0.300000,0.000000,0.300000,0.300000,n=1"
        );
        assert_eq!(
            lines[3],
            "1,chain,best_val_accuracy,0,,,,,warning: no completed runs"
        );
    }

    #[test]
    fn svg_has_reference_line_and_polylines() {
        let traces: Vec<TraceRow> = (0..2)
            .flat_map(|run| {
                (0..3).map(move |it| TraceRow {
                    run,
                    fraction: 0.01,
                    iteration: it,
                    val_accuracy: 0.5,
                    test_accuracy: 0.4 + 0.01 * it as f64,
                    pseudo_count: 0,
                    pseudo_agreement: None,
                })
            })
            .collect();
        let svg = render_chain_svg(&traces, &aggregate_runs(&rows()));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<line").count(), 1);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn confusion_layout() {
        let cat = ClassCatalog::new(["a", "b"]).unwrap();
        let m = ConfusionMatrix::from_counts(vec![vec![3, 1], vec![0, 2]]).unwrap();
        assert_eq!(format_confusion_csv(&m, &cat), "truth,a,b\na,3,1\nb,0,2\n");
    }
}
