//! Python bindings for `teacher_chain`.
//!
//! Tables, splits and models are opaque handles; features and probabilities
//! cross the boundary as nested lists of floats. Pool labels never do.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use teacher_chain::chain::{self, ChainConfig};
use teacher_chain::dataset::{self, ClassCatalog, Sample, SplitSpec, SyntheticSpec};
use teacher_chain::distill::{self, DistillConfig, KLimit, PseudoLabel};
use teacher_chain::experiment::{self, ConfigMap, RunOptions};
use teacher_chain::learner::{self, ArchSpec, ModelParams, SoftTarget, TrainConfig};
use teacher_chain::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numeric(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for teacher_chain::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A table of samples with optional labels.
#[pyclass(name = "DataTable", module = "tschain", frozen, from_py_object)]
#[derive(Clone)]
struct PyDataTable {
    inner: dataset::DataTable,
}

#[pymethods]
impl PyDataTable {
    /// `labels` holds class indices or `None` entries; `class_names`
    /// defaults to `c0..c{n-1}` sized by the largest label.
    #[new]
    #[pyo3(signature = (ids, features, labels=None, class_names=None))]
    fn new(
        ids: Vec<u64>,
        features: Vec<Vec<f64>>,
        labels: Option<Vec<Option<usize>>>,
        class_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        if ids.len() != features.len() {
            return Err(PyValueError::new_err("ids and features differ in length"));
        }
        let labels = labels.unwrap_or_else(|| vec![None; ids.len()]);
        if labels.len() != ids.len() {
            return Err(PyValueError::new_err("ids and labels differ in length"));
        }
        let catalog = match class_names {
            Some(names) => ClassCatalog::new(names).py()?,
            None => {
                let n = labels.iter().flatten().max().map_or(2, |m| (m + 1).max(2));
                ClassCatalog::for_count(n).py()?
            }
        };
        let dim = features.first().map_or(1, Vec::len);
        let samples = ids
            .into_iter()
            .zip(features)
            .zip(labels)
            .map(|((id, f), l)| Sample::new(id, f, l))
            .collect();
        Ok(Self {
            inner: dataset::DataTable::new(catalog, dim, samples).py()?,
        })
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::read_table(&path).py()?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        dataset::write_table(&path, &self.inner).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "DataTable(len={}, dim={}, classes={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.num_classes()
        )
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.catalog().names().to_vec()
    }

    #[getter]
    fn ids(&self) -> Vec<u64> {
        self.inner.ids()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner
            .samples()
            .iter()
            .map(|s| s.features.clone())
            .collect()
    }

    #[getter]
    fn labels(&self) -> Vec<Option<usize>> {
        self.inner.samples().iter().map(|s| s.label).collect()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts()
    }
}

/// Gaussian-mixture benchmark; returns `(train, validation, test)`.
#[pyfunction]
#[pyo3(signature = (classes=9, per_class=900, dim=16, spread=0.9, seed=0))]
fn generate_synthetic(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> PyResult<(PyDataTable, PyDataTable, PyDataTable)> {
    let d = dataset::generate_synthetic(&SyntheticSpec {
        classes,
        per_class,
        dim,
        spread,
        seed,
    })
    .py()?;
    Ok((
        PyDataTable { inner: d.train },
        PyDataTable {
            inner: d.validation,
        },
        PyDataTable { inner: d.test },
    ))
}

/// Labelled / early-stop / pool partition. The pool is exposed without labels.
#[pyclass(name = "Split", module = "tschain", frozen)]
struct PySplit {
    inner: dataset::SplitResult,
}

#[pymethods]
impl PySplit {
    #[getter]
    fn labelled(&self) -> PyDataTable {
        PyDataTable {
            inner: self.inner.labelled.clone(),
        }
    }

    #[getter]
    fn early_stop(&self) -> PyDataTable {
        PyDataTable {
            inner: self.inner.early_stop.clone(),
        }
    }

    #[getter]
    fn pool(&self) -> PyDataTable {
        PyDataTable {
            inner: self.inner.pool.table().clone(),
        }
    }

    /// `(seed, total, labelled, early_stop, pool)`.
    #[getter]
    fn audit(&self) -> (u64, usize, usize, usize, usize) {
        let a = self.inner.audit;
        (a.seed, a.total, a.labelled, a.early_stop, a.pool)
    }

    /// The split normalized with its labelled set's statistics, plus the
    /// extra tables normalized the same way.
    fn normalized(&self, others: Vec<PyDataTable>) -> PyResult<(PySplit, Vec<PyDataTable>)> {
        let norm = dataset::Normalizer::fit(&self.inner.labelled).py()?;
        let split = norm.apply_split(&self.inner).py()?;
        let tables = others
            .iter()
            .map(|t| norm.apply(&t.inner).map(|inner| PyDataTable { inner }))
            .collect::<teacher_chain::Result<Vec<_>>>()
            .py()?;
        Ok((PySplit { inner: split }, tables))
    }
}

#[pyfunction]
#[pyo3(signature = (train, labelled_fraction, early_stop_fraction=0.01, seed=0, balance_labelled=false))]
fn make_splits(
    train: &PyDataTable,
    labelled_fraction: f64,
    early_stop_fraction: f64,
    seed: u64,
    balance_labelled: bool,
) -> PyResult<PySplit> {
    let spec = SplitSpec {
        labelled_fraction,
        early_stop_fraction,
        seed,
        balance_labelled,
    };
    Ok(PySplit {
        inner: dataset::make_splits(&train.inner, &spec).py()?,
    })
}

#[pyclass(name = "Model", module = "tschain", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    params: ModelParams,
    seed: u64,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized weights.
    #[new]
    #[pyo3(signature = (input_dim, hidden, output, seed=0))]
    fn new(input_dim: usize, hidden: Vec<usize>, output: usize, seed: u64) -> PyResult<Self> {
        let arch = ArchSpec::new(input_dim, hidden, output);
        Ok(Self {
            params: learner::init_params(&arch, seed).py()?,
            seed,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (params, seed) = learner::load_checkpoint(&path).py()?;
        Ok(Self { params, seed })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        learner::save_checkpoint(&path, &self.params, self.seed).py()
    }

    /// `(input_dim, hidden, output)`.
    #[getter]
    fn arch(&self) -> (usize, Vec<usize>, usize) {
        let a = self.params.arch();
        (a.input_dim, a.hidden, a.output)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Class probabilities per row.
    fn forward(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        learner::forward(&self.params, &features).py()
    }

    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        learner::predict(&self.params, &features).py()
    }

    /// `(accuracy, confusion)`; confusion rows are true classes.
    fn evaluate(&self, table: &PyDataTable) -> PyResult<(f64, Vec<Vec<u64>>)> {
        let e = learner::evaluate(&self.params, &table.inner).py()?;
        Ok((e.accuracy, e.confusion.counts().to_vec()))
    }

    /// Gradient of the mean soft cross-entropy, as one flat list per layer
    /// (weights then bias).
    fn gradient(&self, features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let g = learner::backward(&self.params, &features, &targets).py()?;
        Ok(g.layers()
            .iter()
            .map(|l| l.weights.iter().chain(&l.bias).copied().collect())
            .collect())
    }

    fn loss(&self, features: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> PyResult<f64> {
        learner::batch_loss(&self.params, &features, &targets).py()
    }
}

fn train_config(
    learning_rate: f64,
    batch_size: usize,
    steps_per_epoch: usize,
    max_epochs: usize,
    patience: usize,
    seed: u64,
) -> TrainConfig {
    TrainConfig {
        learning_rate,
        batch_size,
        steps_per_epoch,
        max_epochs,
        patience,
        seed,
    }
}

/// Supervised training on a labelled table with early stopping. Returns
/// the model and the per-epoch early-stop accuracies.
#[pyfunction]
#[pyo3(signature = (train, early_stop, hidden=vec![32], seed=0, learning_rate=1e-3, batch_size=32, steps_per_epoch=100, max_epochs=200, patience=20))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    train: &PyDataTable,
    early_stop: &PyDataTable,
    hidden: Vec<usize>,
    seed: u64,
    learning_rate: f64,
    batch_size: usize,
    steps_per_epoch: usize,
    max_epochs: usize,
    patience: usize,
) -> PyResult<(PyModel, Vec<f64>)> {
    let t = &train.inner;
    let arch = ArchSpec::new(t.dim(), hidden, t.num_classes());
    let targets = t
        .labels()
        .and_then(|ls| {
            ls.into_iter()
                .map(|l| SoftTarget::one_hot(l, t.num_classes()))
                .collect()
        })
        .py()?;
    let targets: Vec<SoftTarget> = targets;
    let examples: Vec<(&[f64], &SoftTarget)> = t
        .samples()
        .iter()
        .map(|s| s.features.as_slice())
        .zip(&targets)
        .collect();
    let cfg = train_config(
        learning_rate,
        batch_size,
        steps_per_epoch,
        max_epochs,
        patience,
        seed,
    );
    let (params, history) =
        learner::train_with_early_stopping(&arch, &examples, &early_stop.inner, &cfg).py()?;
    let curve = history
        .epochs
        .iter()
        .map(|e| e.early_stop_accuracy)
        .collect();
    Ok((PyModel { params, seed }, curve))
}

/// Top-`p` truncation of one probability vector, renormalized.
#[pyfunction]
fn p_filter(probs: Vec<f64>, p: usize) -> PyResult<Vec<f64>> {
    let label = PseudoLabel::new(0, SoftTarget::new(probs).py()?);
    Ok(distill::apply_p_filter(&label, p)
        .soft()
        .as_slice()
        .to_vec())
}

/// Ids kept by the K-filter over `(id, probs)` pairs, grouped by predicted
/// class in class order. `k=None` keeps every label.
#[pyfunction]
#[pyo3(signature = (labels, k=None))]
fn k_filter(labels: Vec<(u64, Vec<f64>)>, k: Option<usize>) -> PyResult<Vec<u64>> {
    let classes = labels.first().map_or(2, |l| l.1.len());
    let catalog = ClassCatalog::for_count(classes).py()?;
    let labels = labels
        .into_iter()
        .map(|(id, p)| SoftTarget::new(p).map(|s| PseudoLabel::new(id, s)))
        .collect::<teacher_chain::Result<Vec<_>>>()
        .py()?;
    Ok(distill::apply_k_filter(&labels, k, &catalog)
        .iter()
        .map(|l| l.sample_id)
        .collect())
}

/// Index of the highest validation accuracy, the earliest on ties.
#[pyfunction]
fn select_best(val_accuracies: Vec<f64>) -> PyResult<usize> {
    chain::select_best_accuracy(&val_accuracies).py()
}

#[pyclass(name = "ChainIteration", module = "tschain", frozen, get_all)]
struct PyChainIteration {
    iteration: usize,
    val_accuracy: f64,
    test_accuracy: f64,
    pseudo_count: usize,
    pseudo_agreement: Option<f64>,
    model: PyModel,
}

#[pymethods]
impl PyChainIteration {
    fn __repr__(&self) -> String {
        format!(
            "ChainIteration({}, val={:.4}, test={:.4}, pseudo={})",
            self.iteration, self.val_accuracy, self.test_accuracy, self.pseudo_count
        )
    }
}

/// Teacher plus `iterations` students. Returns `(records, best_iteration)`;
/// a student failure raises.
#[pyfunction]
#[pyo3(signature = (split, validation, test, hidden=vec![32], iterations=5, k="80%", p=None, seed=0, fresh_init=true, learning_rate=1e-3, batch_size=32, steps_per_epoch=100, max_epochs=200, patience=20))]
#[allow(clippy::too_many_arguments)]
fn run_chain(
    py: Python<'_>,
    split: &PySplit,
    validation: &PyDataTable,
    test: &PyDataTable,
    hidden: Vec<usize>,
    iterations: usize,
    k: &str,
    p: Option<usize>,
    seed: u64,
    fresh_init: bool,
    learning_rate: f64,
    batch_size: usize,
    steps_per_epoch: usize,
    max_epochs: usize,
    patience: usize,
) -> PyResult<(Vec<Py<PyChainIteration>>, usize)> {
    let s = &split.inner;
    let arch = ArchSpec::new(s.labelled.dim(), hidden, s.labelled.num_classes());
    let train = train_config(
        learning_rate,
        batch_size,
        steps_per_epoch,
        max_epochs,
        patience,
        seed,
    );
    let cfg = ChainConfig {
        iterations,
        distill: DistillConfig {
            k: k.parse::<KLimit>().py()?,
            p,
        },
        pretrain: train.clone(),
        finetune: train,
        fresh_init_per_student: fresh_init,
        keep_pseudo_labels: false,
        seed,
    };
    let result = py
        .detach(|| chain::run_chain(s, &validation.inner, &test.inner, &arch, &cfg))
        .py()?;
    if let Some(f) = &result.failure {
        return Err(PyRuntimeError::new_err(f.clone()));
    }
    let records = result
        .records
        .into_iter()
        .map(|r| {
            Py::new(
                py,
                PyChainIteration {
                    iteration: r.iteration,
                    val_accuracy: r.val_accuracy,
                    test_accuracy: r.test_accuracy,
                    pseudo_count: r.pseudo_count,
                    pseudo_agreement: r.pseudo_agreement,
                    model: PyModel {
                        params: r.model,
                        seed: r.model_seed,
                    },
                },
            )
        })
        .collect::<PyResult<_>>()?;
    Ok((records, result.best_iteration))
}

/// `(n, mean, std, min, max)` with the sample standard deviation.
#[pyfunction]
fn summarize(values: Vec<f64>) -> PyResult<(usize, f64, f64, f64, f64)> {
    let s = experiment::summarize(&values)
        .ok_or_else(|| PyValueError::new_err("no values to summarize"))?;
    Ok((s.n, s.mean, s.std, s.min, s.max))
}

/// Runs an experiment described by `key = value` config text and writes
/// its output directory. Returns the summary as
/// `(fraction, mode, metric, n, mean, std)` rows.
/// `(fraction, mode, metric, n, mean, std)`.
type SummaryRow = (f64, String, String, usize, Option<f64>, Option<f64>);

#[pyfunction]
#[pyo3(signature = (config="", baseline=true, chain=true))]
fn run_experiment(
    py: Python<'_>,
    config: &str,
    baseline: bool,
    chain: bool,
) -> PyResult<Vec<SummaryRow>> {
    let mut map = ConfigMap::new();
    experiment::parse_config_text(config, "config", &mut map).py()?;
    let cfg = experiment::ExperimentConfig::from_map(&map).py()?;
    let opts = RunOptions {
        baseline,
        chain,
        ..RunOptions::default()
    };
    let summary = py
        .detach(|| -> teacher_chain::Result<_> {
            let out = experiment::run_experiment(&cfg, &opts)?;
            experiment::emit_outputs(&cfg.out, &out)
        })
        .py()?;
    Ok(summary
        .cells
        .iter()
        .map(|c| {
            (
                c.fraction,
                c.mode.to_string(),
                c.metric.to_string(),
                c.stats.map_or(0, |s| s.n),
                c.stats.map(|s| s.mean),
                c.stats.map(|s| s.std),
            )
        })
        .collect())
}

#[pymodule]
fn tschain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataTable>()?;
    m.add_class::<PySplit>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyChainIteration>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(make_splits, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(p_filter, m)?)?;
    m.add_function(wrap_pyfunction!(k_filter, m)?)?;
    m.add_function(wrap_pyfunction!(select_best, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
