//! The teacher-student chain.
//!
//! Iteration 0 trains a teacher on the labelled set. Every later iteration
//! pseudo-labels the pool with the previous model, filters the labels,
//! pretrains a fresh student on them and fine-tunes it on the labelled set.
//! The student then teaches the next iteration. The returned best iteration
//! is chosen on validation accuracy alone.

use std::collections::HashMap;
use std::io::Write;

use crate::dataset::{DataTable, SplitResult};
use crate::distill::{
    filter_pseudo_labels, pseudo_label_pool, pseudo_label_quality, DistillConfig, PseudoLabel,
};
use crate::learner::{
    evaluate, init_params, train_from, train_with_early_stopping, ArchSpec, ConfusionMatrix,
    ModelParams, SoftTarget, TrainConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Number of students; the teacher is not counted.
    pub iterations: usize,
    pub distill: DistillConfig,
    pub pretrain: TrainConfig,
    /// Also used for the teacher.
    pub finetune: TrainConfig,
    pub fresh_init_per_student: bool,
    /// Keep each iteration's filtered pseudo-labels in its record.
    pub keep_pseudo_labels: bool,
    /// Model `i` (0 = teacher) is initialized and shuffled with `seed + i`;
    /// the `seed` fields of `pretrain` and `finetune` are ignored.
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            distill: DistillConfig::default(),
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::default(),
            fresh_init_per_student: true,
            keep_pseudo_labels: false,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn model_seed(&self, iteration: usize) -> u64 {
        self.seed.wrapping_add(iteration as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 is the teacher.
    pub iteration: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    /// Pseudo-labels the model was pretrained on (after filtering).
    pub pseudo_count: usize,
    /// Agreement of those pseudo-labels with the hidden pool labels.
    pub pseudo_agreement: Option<f64>,
    pub test_confusion: ConfusionMatrix,
    pub model: ModelParams,
    pub model_seed: u64,
    /// Present when `keep_pseudo_labels` is set; empty for the teacher.
    pub pseudo_labels: Option<Vec<PseudoLabel>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub records: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub config: ChainConfig,
    /// Set when a student failed to train; `records` holds what finished.
    pub failure: Option<String>,
}

impl ChainResult {
    pub fn best(&self) -> &IterationRecord {
        &self.records[self.best_iteration]
    }

    pub fn teacher(&self) -> &IterationRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &IterationRecord {
        &self.records[self.records.len() - 1]
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.model_seed).collect()
    }
}

/// Index of the highest validation accuracy, the earliest on ties. Test
/// accuracy never enters the decision.
pub fn select_best(records: &[IterationRecord]) -> Result<usize> {
    let val: Vec<f64> = records.iter().map(|r| r.val_accuracy).collect();
    select_best_accuracy(&val)
}

pub fn select_best_accuracy(val_accuracies: &[f64]) -> Result<usize> {
    if val_accuracies.is_empty() {
        return Err(Error::invalid("no iterations to select from"));
    }
    let mut best = 0;
    for (i, &v) in val_accuracies.iter().enumerate().skip(1) {
        if v > val_accuracies[best] {
            best = i;
        }
    }
    Ok(best)
}

fn one_hot_targets(table: &DataTable) -> Result<Vec<SoftTarget>> {
    let classes = table.num_classes();
    table
        .labels()?
        .into_iter()
        .map(|l| SoftTarget::one_hot(l, classes))
        .collect()
}

fn pairs<'a>(table: &'a DataTable, targets: &'a [SoftTarget]) -> Vec<(&'a [f64], &'a SoftTarget)> {
    table
        .samples()
        .iter()
        .map(|s| s.features.as_slice())
        .zip(targets)
        .collect()
}

/// Trains on the labelled set's one-hot labels alone. This is both the
/// chain's teacher and the supervised baseline.
pub fn train_supervised(
    splits: &SplitResult,
    arch: &ArchSpec,
    config: &TrainConfig,
) -> Result<ModelParams> {
    let targets = one_hot_targets(&splits.labelled)?;
    let (model, _) = train_with_early_stopping(
        arch,
        &pairs(&splits.labelled, &targets),
        &splits.early_stop,
        config,
    )?;
    Ok(model)
}

/// Pretrains on the pool's pseudo-labels, then fine-tunes on the labelled
/// set with a fresh optimizer, starting from the pretraining snapshot.
///
/// The student starts from `init_params(arch, student_seed)`, or from
/// `previous` when `cfg.fresh_init_per_student` is off.
pub fn train_student(
    teacher_labels: &[PseudoLabel],
    splits: &SplitResult,
    arch: &ArchSpec,
    cfg: &ChainConfig,
    student_seed: u64,
    previous: Option<&ModelParams>,
) -> Result<ModelParams> {
    if teacher_labels.is_empty() {
        return Err(Error::invalid("no pseudo-labels to pretrain on"));
    }
    if splits.labelled.is_empty() {
        return Err(Error::invalid("labelled set is empty"));
    }
    let initial = match previous {
        Some(p) if !cfg.fresh_init_per_student => p.clone(),
        _ => init_params(arch, student_seed)?,
    };

    let pool_features: HashMap<u64, &[f64]> = splits
        .pool
        .table()
        .samples()
        .iter()
        .map(|s| (s.id, s.features.as_slice()))
        .collect();
    let pretrain_examples = teacher_labels
        .iter()
        .map(|l| {
            pool_features
                .get(&l.sample_id)
                .map(|&x| (x, l.soft()))
                .ok_or_else(|| {
                    Error::invalid(format!("pseudo-label for unknown sample {}", l.sample_id))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let (pretrained, _) = train_from(
        initial,
        &pretrain_examples,
        &splits.early_stop,
        &cfg.pretrain.with_seed(student_seed),
    )?;

    let targets = one_hot_targets(&splits.labelled)?;
    let (student, _) = train_from(
        pretrained,
        &pairs(&splits.labelled, &targets),
        &splits.early_stop,
        &cfg.finetune.with_seed(student_seed),
    )?;
    Ok(student)
}

fn record(
    iteration: usize,
    model: ModelParams,
    model_seed: u64,
    validation: &DataTable,
    test: &DataTable,
    pseudo: Option<(usize, f64)>,
) -> Result<IterationRecord> {
    let val = evaluate(&model, validation)?;
    let test = evaluate(&model, test)?;
    Ok(IterationRecord {
        iteration,
        val_accuracy: val.accuracy,
        test_accuracy: test.accuracy,
        pseudo_count: pseudo.map_or(0, |p| p.0),
        pseudo_agreement: pseudo.map(|p| p.1),
        test_confusion: test.confusion,
        model,
        model_seed,
        pseudo_labels: None,
    })
}

/// Runs a teacher and `cfg.iterations` students.
///
/// Invalid inputs and a failing teacher are errors. A failing student stops
/// the chain; the result then carries the finished iterations and the
/// failure message.
pub fn run_chain(
    splits: &SplitResult,
    validation: &DataTable,
    test: &DataTable,
    arch: &ArchSpec,
    cfg: &ChainConfig,
) -> Result<ChainResult> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("a chain needs at least one student"));
    }
    arch.validate()?;
    let catalog = splits.labelled.catalog();
    cfg.distill.validate(catalog.len())?;
    if splits.pool.is_empty() {
        return Err(Error::invalid("empty pool"));
    }
    for (name, t) in [("validation", validation), ("test", test)] {
        if t.is_empty() || !t.is_fully_labelled() {
            return Err(Error::invalid(format!(
                "{name} set must be non-empty and labelled"
            )));
        }
    }

    let teacher_seed = cfg.model_seed(0);
    let teacher = train_supervised(splits, arch, &cfg.finetune.with_seed(teacher_seed))?;
    let mut teacher_record = record(0, teacher, teacher_seed, validation, test, None)?;
    if cfg.keep_pseudo_labels {
        teacher_record.pseudo_labels = Some(Vec::new());
    }
    let mut records = vec![teacher_record];
    let mut failure = None;

    for iteration in 1..=cfg.iterations {
        let step = || -> Result<IterationRecord> {
            let current = &records[records.len() - 1].model;
            let labels = pseudo_label_pool(current, &splits.pool)?;
            let filtered = filter_pseudo_labels(&labels, &cfg.distill, catalog, splits.pool.len());
            let quality = pseudo_label_quality(&filtered, &splits.pool)?;
            let seed = cfg.model_seed(iteration);
            let student = train_student(&filtered, splits, arch, cfg, seed, Some(current))?;
            let mut r = record(
                iteration,
                student,
                seed,
                validation,
                test,
                Some((filtered.len(), quality.agreement)),
            )?;
            if cfg.keep_pseudo_labels {
                r.pseudo_labels = Some(filtered);
            }
            Ok(r)
        };
        match step() {
            Ok(r) => records.push(r),
            Err(e) => {
                failure = Some(format!("iteration {iteration}: {e}"));
                break;
            }
        }
    }

    let best_iteration = select_best(&records)?;
    Ok(ChainResult {
        records,
        best_iteration,
        config: cfg.clone(),
        failure,
    })
}

pub const TRACE_HEADER: &str =
    "run,iteration,val_accuracy,test_accuracy,pseudo_count,pseudo_agreement";

/// One row per iteration of every `(run, chain)` pair.
pub fn write_chain_trace<W: Write>(
    out: W,
    chains: &[(usize, &ChainResult)],
) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "{TRACE_HEADER}")?;
    for (run, chain) in chains {
        for r in &chain.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                run,
                r.iteration,
                r.val_accuracy,
                r.test_accuracy,
                r.pseudo_count,
                r.pseudo_agreement
                    .map(|a| a.to_string())
                    .unwrap_or_default()
            )?;
        }
    }
    w.flush()
}
