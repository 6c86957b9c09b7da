//! Experiment harness: sweeps labelled fractions and repeated runs,
//! trains baselines and chains, aggregates and writes results.
//!
//! Every `(fraction, run)` cell is seeded from the master seed alone, so
//! cells are independent and can run in any order or in parallel.

mod aggregate;
mod config;
mod report;
mod runner;

pub use aggregate::{
    aggregate_runs, summarize, Mode, RunRow, RunSummary, Stats, Status, SummaryCell,
};
pub use config::{
    parse_config_text, read_config_file, ConfigMap, DataSource, ExperimentConfig, DEFAULT_FRACTIONS,
};
pub use report::{
    emit_outputs, format_confusion_csv, format_runs_csv, format_summary_csv, format_traces_csv,
    read_runs_csv, read_traces_csv, render_chain_svg, report, SUMMARY_HEADER, TRACES_HEADER,
};
pub use runner::{
    cell_model_seed, cell_seed, load_data, run_baseline_sweep, run_chain_experiment,
    run_experiment, run_experiment_on, ConfusionRecord, ExperimentData, ExperimentOutput,
    PseudoLabelDump, RunOptions, TraceRow,
};
