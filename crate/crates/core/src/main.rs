//! `tschain`: command-line front end of the experiment harness.
//!
//! Exit status: 0 on success, 1 for an invalid configuration or invalid
//! arguments, 2 when the run itself fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use teacher_chain::dataset::{write_table, DataTable};
use teacher_chain::experiment::{
    emit_outputs, load_data, parse_config_text, read_config_file, report, run_experiment_on,
    ConfigMap, DataSource, ExperimentConfig, Mode, RunOptions, RunSummary,
};
use teacher_chain::Error;

#[derive(Parser)]
#[command(
    name = "tschain",
    version,
    about = "Teacher-student chains on small labelled sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic train/validation/test tables as CSV.
    Synth(Common),
    /// Supervised baseline over all labelled fractions and runs.
    Baseline(Common),
    /// Teacher-student chains, plus the baseline they are compared to.
    Chain {
        #[command(flatten)]
        common: Common,
        /// Skip the baseline sweep.
        #[arg(long)]
        no_baseline: bool,
        /// Write the filtered pseudo-labels of every iteration.
        #[arg(long)]
        dump_pseudo_labels: bool,
    },
    /// Rebuild summary.csv and chain_curves.svg from runs.csv and traces.csv.
    Report {
        /// Experiment output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated labelled fractions.
    #[arg(long)]
    fractions: Option<String>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// No per-cell progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn build_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut map = ConfigMap::new();
    if let Some(path) = &c.config {
        read_config_file(path, &mut map).map_err(config_err)?;
    }
    let mut overrides = String::new();
    for kv in &c.set {
        if !kv.contains('=') {
            return Err(Failure::Config(format!(
                "--set expects KEY=VALUE, got {kv:?}"
            )));
        }
        overrides.push_str(kv);
        overrides.push('\n');
    }
    let flag = |k: &str, v: Option<String>| v.map(|v| format!("{k} = {v}\n")).unwrap_or_default();
    overrides.push_str(&flag("seed", c.seed.map(|s| s.to_string())));
    overrides.push_str(&flag(
        "out",
        c.out.as_ref().map(|p| p.display().to_string()),
    ));
    overrides.push_str(&flag("jobs", c.jobs.map(|j| j.to_string())));
    overrides.push_str(&flag("runs", c.runs.map(|r| r.to_string())));
    overrides.push_str(&flag("split.fractions", c.fractions.clone()));
    parse_config_text(&overrides, "command line", &mut map).map_err(config_err)?;
    ExperimentConfig::from_map(&map).map_err(config_err)
}

fn print_summary(summary: &RunSummary) {
    println!(
        "{:>9}  {:<8}  {:<20}  {:>2}  {:>8}  {:>8}",
        "fraction", "mode", "metric", "n", "mean", "std"
    );
    for c in &summary.cells {
        match c.stats {
            Some(s) => println!(
                "{:>9}  {:<8}  {:<20}  {:>2}  {:>8.4}  {:>8.4}",
                c.fraction, c.mode, c.metric, s.n, s.mean, s.std
            ),
            None => println!(
                "{:>9}  {:<8}  {:<20}  {:>2}  {}",
                c.fraction, c.mode, c.metric, 0, c.note
            ),
        }
    }
}

fn write_split(dir: &Path, name: &str, table: &DataTable) -> Result<(), Failure> {
    write_table(&dir.join(format!("{name}.csv")), table)?;
    Ok(())
}

fn synth(c: &Common) -> Result<(), Failure> {
    let cfg = build_config(c)?;
    if !matches!(cfg.data, DataSource::Synthetic { .. }) {
        return Err(Failure::Config(
            "synth needs data.source = synthetic".into(),
        ));
    }
    let data = load_data(&cfg)?;
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", cfg.out.display())))?;
    write_split(&cfg.out, "train", &data.train)?;
    write_split(&cfg.out, "validation", &data.validation)?;
    write_split(&cfg.out, "test", &data.test)?;
    println!(
        "wrote {} / {} / {} samples to {}",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        cfg.out.display()
    );
    Ok(())
}

fn experiment(c: &Common, opts: RunOptions) -> Result<(), Failure> {
    let cfg = build_config(c)?;
    let data = load_data(&cfg)?;
    let output = run_experiment_on(&data, &cfg, &opts)?;
    let summary = emit_outputs(&cfg.out, &output)?;
    print_summary(&summary);
    if opts.chain {
        for &f in &cfg.fractions {
            if let (Some(best), Some(teacher)) = (
                summary.mean(f, Mode::Chain, "best_test_accuracy"),
                summary.mean(f, Mode::Baseline, "test_accuracy"),
            ) {
                println!(
                    "fraction {f}: chain - baseline test accuracy = {:+.4}",
                    best - teacher
                );
            }
        }
    }
    eprintln!("results in {}", cfg.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(c) => synth(&c),
        Command::Baseline(c) => experiment(
            &c,
            RunOptions {
                baseline: true,
                chain: false,
                keep_pseudo_labels: false,
                progress: !c.quiet,
            },
        ),
        Command::Chain {
            common,
            no_baseline,
            dump_pseudo_labels,
        } => experiment(
            &common,
            RunOptions {
                baseline: !no_baseline,
                chain: true,
                keep_pseudo_labels: dump_pseudo_labels,
                progress: !common.quiet,
            },
        ),
        Command::Report { out } => {
            let summary = report(&out)?;
            print_summary(&summary);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
