use rayon::prelude::*;

use super::aggregate::{Mode, RunRow, Status};
use super::config::{DataSource, ExperimentConfig};
use crate::chain::{run_chain, train_supervised, ChainConfig, ChainResult};
use crate::dataset::{
    generate_synthetic, make_splits, read_table, ClassCatalog, DataTable, Normalizer, SplitResult,
    SplitSpec, SyntheticSpec,
};
use crate::distill::PseudoLabel;
use crate::learner::{evaluate, ArchSpec, ConfusionMatrix};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// Seed of one `(fraction, run)` cell; drives its split.
pub fn cell_seed(master: u64, fraction: f64, run: usize) -> u64 {
    derive_seed(master, &[fraction.to_bits(), run as u64])
}

/// Seed of the models trained in a cell. The baseline and the chain's
/// teacher share it, so the two are the same model.
pub fn cell_model_seed(master: u64, fraction: f64, run: usize) -> u64 {
    derive_seed(cell_seed(master, fraction, run), &[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: DataTable,
    pub validation: DataTable,
    pub test: DataTable,
}

impl ExperimentData {
    pub fn catalog(&self) -> &ClassCatalog {
        self.train.catalog()
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    match &cfg.data {
        DataSource::Synthetic {
            classes,
            per_class,
            dim,
            spread,
        } => {
            let d = generate_synthetic(&SyntheticSpec {
                classes: *classes,
                per_class: *per_class,
                dim: *dim,
                spread: *spread,
                seed: cfg.seed,
            })?;
            Ok(ExperimentData {
                train: d.train,
                validation: d.validation,
                test: d.test,
            })
        }
        DataSource::Files {
            train,
            validation,
            test,
        } => {
            let data = ExperimentData {
                train: read_table(train)?,
                validation: read_table(validation)?,
                test: read_table(test)?,
            };
            for (name, t) in [("validation", &data.validation), ("test", &data.test)] {
                if t.catalog() != data.train.catalog() || t.dim() != data.train.dim() {
                    return Err(Error::invalid(format!(
                        "{name} table does not match the training table's classes or dimension"
                    )));
                }
            }
            for (name, t) in [
                ("train", &data.train),
                ("validation", &data.validation),
                ("test", &data.test),
            ] {
                if t.is_empty() || !t.is_fully_labelled() {
                    return Err(Error::invalid(format!(
                        "{name} table must be non-empty and labelled"
                    )));
                }
            }
            Ok(data)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub run: usize,
    pub fraction: f64,
    pub iteration: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub pseudo_count: usize,
    pub pseudo_agreement: Option<f64>,
}

/// Test-set confusion of the baseline, or of the chain's selected model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionRecord {
    pub fraction: f64,
    pub run: usize,
    pub mode: Mode,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelDump {
    pub fraction: f64,
    pub run: usize,
    pub iteration: usize,
    pub labels: Vec<PseudoLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub baseline: bool,
    pub chain: bool,
    pub keep_pseudo_labels: bool,
    /// Print one line per finished cell to stderr.
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            baseline: true,
            chain: true,
            keep_pseudo_labels: false,
            progress: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub catalog: ClassCatalog,
    /// Ordered by fraction, run, then mode.
    pub rows: Vec<RunRow>,
    pub traces: Vec<TraceRow>,
    pub confusions: Vec<ConfusionRecord>,
    pub pseudo_labels: Vec<PseudoLabelDump>,
}

#[derive(Default)]
struct CellOutput {
    rows: Vec<RunRow>,
    traces: Vec<TraceRow>,
    confusions: Vec<ConfusionRecord>,
    pseudo_labels: Vec<PseudoLabelDump>,
}

struct Prepared {
    splits: SplitResult,
    validation: DataTable,
    test: DataTable,
}

/// Split for one cell, normalized with statistics of its labelled set.
///
/// A labelled fraction that leaves no room for the early-stop reserve is
/// clamped to the remainder, so fraction 1 trains on everything with an
/// empty pool.
fn prepare(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    fraction: f64,
    run: usize,
) -> Result<Prepared> {
    let spec = SplitSpec {
        labelled_fraction: fraction.min(1.0 - cfg.early_stop_fraction),
        early_stop_fraction: cfg.early_stop_fraction,
        seed: cell_seed(cfg.seed, fraction, run),
        balance_labelled: cfg.balance_labelled,
    };
    let splits = make_splits(&data.train, &spec)?;
    let norm = Normalizer::fit(&splits.labelled)?;
    Ok(Prepared {
        splits: norm.apply_split(&splits)?,
        validation: norm.apply(&data.validation)?,
        test: norm.apply(&data.test)?,
    })
}

fn arch_of(data: &ExperimentData, cfg: &ExperimentConfig) -> ArchSpec {
    ArchSpec::new(data.train.dim(), cfg.hidden.clone(), data.catalog().len())
}

fn chain_config(cfg: &ExperimentConfig, seed: u64, keep_pseudo_labels: bool) -> ChainConfig {
    ChainConfig {
        iterations: cfg.iterations,
        distill: cfg.distill.clone(),
        pretrain: cfg.pretrain.clone(),
        finetune: cfg.finetune.clone(),
        fresh_init_per_student: cfg.fresh_init,
        keep_pseudo_labels,
        seed,
    }
}

fn baseline_cell(
    p: &Prepared,
    arch: &ArchSpec,
    cfg: &ExperimentConfig,
    fraction: f64,
    run: usize,
    out: &mut CellOutput,
) {
    let seed = cell_model_seed(cfg.seed, fraction, run);
    let result = (|| {
        let model = train_supervised(&p.splits, arch, &cfg.finetune.with_seed(seed))?;
        Ok::<_, Error>((evaluate(&model, &p.validation)?, evaluate(&model, &p.test)?))
    })();
    match result {
        Ok((val, test)) => {
            out.rows.push(RunRow {
                fraction,
                run,
                mode: Mode::Baseline,
                status: Status::Ok,
                seed,
                best_iteration: None,
                val_accuracy: Some(val.accuracy),
                test_accuracy: Some(test.accuracy),
                final_val_accuracy: None,
                final_test_accuracy: None,
                reason: String::new(),
            });
            out.confusions.push(ConfusionRecord {
                fraction,
                run,
                mode: Mode::Baseline,
                confusion: test.confusion,
            });
        }
        Err(e) => {
            let mut row = RunRow::skipped(fraction, run, Mode::Baseline, seed, e.to_string());
            row.status = Status::Failed;
            out.rows.push(row);
        }
    }
}

fn chain_row(fraction: f64, run: usize, seed: u64, r: &ChainResult) -> RunRow {
    let best = r.best();
    let last = r.last();
    RunRow {
        fraction,
        run,
        mode: Mode::Chain,
        status: if r.failure.is_some() {
            Status::Failed
        } else {
            Status::Ok
        },
        seed,
        best_iteration: Some(r.best_iteration),
        val_accuracy: Some(best.val_accuracy),
        test_accuracy: Some(best.test_accuracy),
        final_val_accuracy: Some(last.val_accuracy),
        final_test_accuracy: Some(last.test_accuracy),
        reason: r.failure.clone().unwrap_or_default(),
    }
}

fn chain_cell(
    p: &Prepared,
    arch: &ArchSpec,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    fraction: f64,
    run: usize,
    out: &mut CellOutput,
) {
    let seed = cell_model_seed(cfg.seed, fraction, run);
    if p.splits.pool.is_empty() {
        out.rows.push(RunRow::skipped(
            fraction,
            run,
            Mode::Chain,
            seed,
            "empty pool",
        ));
        return;
    }
    let ccfg = chain_config(cfg, seed, opts.keep_pseudo_labels);
    match run_chain(&p.splits, &p.validation, &p.test, arch, &ccfg) {
        Ok(r) => {
            out.rows.push(chain_row(fraction, run, seed, &r));
            out.confusions.push(ConfusionRecord {
                fraction,
                run,
                mode: Mode::Chain,
                confusion: r.best().test_confusion.clone(),
            });
            for rec in r.records {
                out.traces.push(TraceRow {
                    run,
                    fraction,
                    iteration: rec.iteration,
                    val_accuracy: rec.val_accuracy,
                    test_accuracy: rec.test_accuracy,
                    pseudo_count: rec.pseudo_count,
                    pseudo_agreement: rec.pseudo_agreement,
                });
                if let Some(labels) = rec.pseudo_labels.filter(|l| !l.is_empty()) {
                    out.pseudo_labels.push(PseudoLabelDump {
                        fraction,
                        run,
                        iteration: rec.iteration,
                        labels,
                    });
                }
            }
        }
        Err(e) => {
            let mut row = RunRow::skipped(fraction, run, Mode::Chain, seed, e.to_string());
            row.status = Status::Failed;
            out.rows.push(row);
        }
    }
}

fn run_cell(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    fraction: f64,
    run: usize,
) -> CellOutput {
    let mut out = CellOutput::default();
    let arch = arch_of(data, cfg);
    let model_seed = cell_model_seed(cfg.seed, fraction, run);
    match prepare(data, cfg, fraction, run) {
        Ok(p) => {
            if opts.baseline {
                baseline_cell(&p, &arch, cfg, fraction, run, &mut out);
            }
            if opts.chain {
                chain_cell(&p, &arch, cfg, opts, fraction, run, &mut out);
            }
        }
        Err(e) => {
            for (on, mode) in [(opts.baseline, Mode::Baseline), (opts.chain, Mode::Chain)] {
                if on {
                    out.rows.push(RunRow::skipped(
                        fraction,
                        run,
                        mode,
                        model_seed,
                        e.to_string(),
                    ));
                }
            }
        }
    }
    if opts.progress {
        let status: Vec<String> = out
            .rows
            .iter()
            .map(|r| format!("{}={}", r.mode, r.status.as_str()))
            .collect();
        eprintln!("fraction {fraction} run {run}: {}", status.join(" "));
    }
    out
}

/// Runs every `(fraction, run)` cell on a pool of `cfg.jobs` threads.
/// Results are assembled in cell order, so the output does not depend on
/// scheduling.
pub fn run_experiment_on(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if !opts.baseline && !opts.chain {
        return Err(Error::invalid("nothing to run"));
    }
    cfg.distill
        .validate(data.catalog().len())
        .map_err(|e| Error::Config(format!("chain: {e}")))?;
    let cells: Vec<(f64, usize)> = cfg
        .fractions
        .iter()
        .flat_map(|&f| (0..cfg.runs).map(move |r| (f, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let outputs: Vec<CellOutput> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(f, r)| run_cell(data, cfg, opts, f, r))
            .collect()
    });

    let mut result = ExperimentOutput {
        config: cfg.clone(),
        catalog: data.catalog().clone(),
        rows: Vec::new(),
        traces: Vec::new(),
        confusions: Vec::new(),
        pseudo_labels: Vec::new(),
    };
    for o in outputs {
        result.rows.extend(o.rows);
        result.traces.extend(o.traces);
        result.confusions.extend(o.confusions);
        result.pseudo_labels.extend(o.pseudo_labels);
    }
    Ok(result)
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    run_experiment_on(&data, cfg, opts)
}

/// Supervised baseline over every fraction and run.
pub fn run_baseline_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment(
        cfg,
        &RunOptions {
            chain: false,
            ..RunOptions::default()
        },
    )
}

/// Teacher-student chain over every fraction and run. Cells without a pool
/// are reported as skipped.
pub fn run_chain_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment(
        cfg,
        &RunOptions {
            baseline: false,
            ..RunOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::TrainConfig;

    fn tiny() -> ExperimentConfig {
        let quick = TrainConfig {
            learning_rate: 0.01,
            batch_size: 8,
            steps_per_epoch: 4,
            max_epochs: 3,
            patience: 2,
            seed: 0,
        };
        ExperimentConfig {
            seed: 3,
            data: DataSource::Synthetic {
                classes: 3,
                per_class: 40,
                dim: 2,
                spread: 0.4,
            },
            fractions: vec![0.1, 1.0],
            runs: 2,
            early_stop_fraction: 0.1,
            hidden: vec![4],
            pretrain: quick.clone(),
            finetune: quick,
            iterations: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn seeds_differ_per_cell() {
        assert_ne!(cell_seed(1, 0.01, 0), cell_seed(1, 0.01, 1));
        assert_ne!(cell_seed(1, 0.01, 0), cell_seed(1, 0.05, 0));
        assert_ne!(cell_seed(1, 0.01, 0), cell_seed(2, 0.01, 0));
        assert_ne!(cell_seed(1, 0.01, 0), cell_model_seed(1, 0.01, 0));
    }

    #[test]
    fn full_fraction_skips_chain_but_trains_baseline() {
        let out = run_experiment(&tiny(), &RunOptions::default()).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 2);
        let full: Vec<&RunRow> = out.rows.iter().filter(|r| r.fraction == 1.0).collect();
        for r in full {
            match r.mode {
                Mode::Baseline => assert_eq!(r.status, Status::Ok),
                Mode::Chain => {
                    assert_eq!(r.status, Status::Skipped);
                    assert_eq!(r.reason, "empty pool");
                }
            }
        }
        assert_eq!(out.traces.len(), 2 * 3);
        assert!(out.traces.iter().all(|t| t.fraction == 0.1));
    }

    #[test]
    fn baseline_is_the_chain_teacher() {
        let out = run_experiment(&tiny(), &RunOptions::default()).unwrap();
        for run in 0..2 {
            let base = out
                .rows
                .iter()
                .find(|r| r.fraction == 0.1 && r.run == run && r.mode == Mode::Baseline)
                .unwrap();
            let teacher = out
                .traces
                .iter()
                .find(|t| t.run == run && t.iteration == 0)
                .unwrap();
            assert_eq!(base.val_accuracy, Some(teacher.val_accuracy));
            assert_eq!(base.test_accuracy, Some(teacher.test_accuracy));
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let mut cfg = tiny();
        let serial = run_experiment(&cfg, &RunOptions::default()).unwrap();
        cfg.jobs = 3;
        let parallel = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(serial.rows, parallel.rows);
        assert_eq!(serial.traces, parallel.traces);
    }

    #[test]
    fn infeasible_split_is_skipped_not_fatal() {
        let mut cfg = tiny();
        // 96 training samples: a 1% reserve cannot hold all three classes.
        cfg.early_stop_fraction = 0.01;
        cfg.fractions = vec![0.1];
        let out = run_baseline_sweep(&cfg).unwrap();
        assert!(out
            .rows
            .iter()
            .all(|r| r.status == Status::Skipped && !r.reason.is_empty()));
    }

    #[test]
    fn keeps_pseudo_labels_when_asked() {
        let mut cfg = tiny();
        cfg.fractions = vec![0.1];
        cfg.runs = 1;
        let opts = RunOptions {
            baseline: false,
            keep_pseudo_labels: true,
            ..RunOptions::default()
        };
        let out = run_experiment(&cfg, &opts).unwrap();
        assert_eq!(out.pseudo_labels.len(), 2);
        assert_eq!(out.pseudo_labels[1].iteration, 2);
    }
}
