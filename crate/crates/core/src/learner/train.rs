use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::loss_and_gradient;
use super::{adam_update, evaluate, init_params, AdamState, ArchSpec, ModelParams, SoftTarget};
use crate::dataset::DataTable;
use crate::seed::{self, Stream};
use crate::{Error, Result};

/// Name of the weight initialization, recorded next to results.
pub const INIT_SCHEME: &str = "uniform-fan-in";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Minibatch steps per epoch, independent of the training set size.
    pub steps_per_epoch: usize,
    pub max_epochs: usize,
    /// Epochs without early-stop improvement before training halts.
    pub patience: usize,
    /// Seeds the weight init and the minibatch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            steps_per_epoch: 100,
            max_epochs: 200,
            patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.steps_per_epoch == 0 {
            return Err(Error::invalid(
                "batch_size and steps_per_epoch must be positive",
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub early_stop_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Earliest epoch attaining `best_accuracy`; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_accuracy: f64,
    pub init_scheme: &'static str,
    pub seed: u64,
}

/// Endless stream of example indices: a shuffled pass, reshuffled whenever it runs out.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
            rng: seed::rng(seed, Stream::Batches),
        }
    }

    fn fill(&mut self, batch: &mut Vec<usize>, size: usize) {
        batch.clear();
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
    }
}

/// Trains a freshly initialized model (init seeded by `config.seed`).
pub fn train_with_early_stopping(
    arch: &ArchSpec,
    examples: &[(&[f64], &SoftTarget)],
    early_stop: &DataTable,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let initial = init_params(arch, config.seed)?;
    train_from(initial, examples, early_stop, config)
}

/// Trains from `initial` with a fresh Adam state and returns the snapshot
/// with the best early-stop accuracy (earliest epoch on ties).
pub fn train_from(
    initial: ModelParams,
    examples: &[(&[f64], &SoftTarget)],
    early_stop: &DataTable,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: None,
        best_accuracy: 0.0,
        init_scheme: INIT_SCHEME,
        seed: config.seed,
    };
    if examples.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    for (x, t) in examples {
        if x.len() != initial.input_dim() || t.len() != initial.output_dim() {
            return Err(Error::invalid(format!(
                "example shape ({}, {}) does not fit model ({}, {})",
                x.len(),
                t.len(),
                initial.input_dim(),
                initial.output_dim()
            )));
        }
    }
    if config.max_epochs == 0 {
        return Ok((initial, history));
    }
    if early_stop.is_empty() || !early_stop.is_fully_labelled() {
        return Err(Error::invalid(
            "early-stop set must be non-empty and labelled",
        ));
    }

    let mut params = initial;
    let mut adam = AdamState::new(&params);
    let mut stream = BatchStream::new(examples.len(), config.seed);
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut xs: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    let mut ts: Vec<&[f64]> = Vec::with_capacity(config.batch_size);
    let mut best = params.clone();
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        let mut loss_sum = 0.0;
        for _ in 0..config.steps_per_epoch {
            stream.fill(&mut batch, config.batch_size);
            xs.clear();
            ts.clear();
            for &i in &batch {
                xs.push(examples[i].0);
                ts.push(examples[i].1.as_slice());
            }
            let (loss, grad) = loss_and_gradient(&params, &xs, &ts)?;
            adam_update(&mut params, &grad, &mut adam, config.learning_rate)?;
            loss_sum += loss;
        }
        let accuracy = evaluate(&params, early_stop)?.accuracy;
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / config.steps_per_epoch as f64,
            early_stop_accuracy: accuracy,
        });
        if history.best_epoch.is_none() || accuracy > history.best_accuracy {
            history.best_epoch = Some(epoch);
            history.best_accuracy = accuracy;
            best.clone_from(&params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassCatalog, GaussianMixture};

    fn blobs(seed: u64, per_class: usize) -> DataTable {
        let m = GaussianMixture::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], 0.1).unwrap();
        let mut rng = seed::rng(seed, Stream::Synthetic);
        m.sample_table(&ClassCatalog::for_count(2).unwrap(), per_class, 0, &mut rng)
            .unwrap()
    }

    fn one_hot(t: &DataTable) -> Vec<SoftTarget> {
        t.labels()
            .unwrap()
            .into_iter()
            .map(|l| SoftTarget::one_hot(l, 2).unwrap())
            .collect()
    }

    fn pairs<'a>(t: &'a DataTable, targets: &'a [SoftTarget]) -> Vec<(&'a [f64], &'a SoftTarget)> {
        t.samples()
            .iter()
            .map(|s| s.features.as_slice())
            .zip(targets)
            .collect()
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let data = blobs(1, 10);
        let targets = one_hot(&data);
        let arch = ArchSpec::new(2, vec![], 2);
        let config = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (p, h) =
            train_with_early_stopping(&arch, &pairs(&data, &targets), &data, &config).unwrap();
        assert_eq!(p, init_params(&arch, config.seed).unwrap());
        assert!(h.epochs.is_empty());
        assert_eq!(h.best_epoch, None);
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let train = blobs(2, 50);
        let es = blobs(3, 20);
        let targets = one_hot(&train);
        let arch = ArchSpec::new(2, vec![], 2);
        let config = TrainConfig {
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let (p, h) =
            train_with_early_stopping(&arch, &pairs(&train, &targets), &es, &config).unwrap();
        assert_eq!(h.best_accuracy, 1.0);
        assert!(h.epochs.len() <= 50);
        assert_eq!(evaluate(&p, &es).unwrap().accuracy, 1.0);
    }

    #[test]
    fn history_invariants_and_determinism() {
        let train = blobs(4, 30);
        let es = blobs(5, 10);
        let targets = one_hot(&train);
        let arch = ArchSpec::new(2, vec![4], 2);
        let config = TrainConfig {
            max_epochs: 15,
            steps_per_epoch: 5,
            batch_size: 7,
            patience: 3,
            learning_rate: 0.01,
            seed: 9,
        };
        let ex = pairs(&train, &targets);
        let (p1, h1) = train_with_early_stopping(&arch, &ex, &es, &config).unwrap();
        let (p2, h2) = train_with_early_stopping(&arch, &ex, &es, &config).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);

        let max = h1
            .epochs
            .iter()
            .map(|e| e.early_stop_accuracy)
            .fold(f64::MIN, f64::max);
        assert_eq!(h1.best_accuracy, max);
        let first = h1.epochs.iter().position(|e| e.early_stop_accuracy == max);
        assert_eq!(h1.best_epoch, first);
        assert_eq!(evaluate(&p1, &es).unwrap().accuracy, h1.best_accuracy);
    }

    #[test]
    fn batch_stream_covers_small_sets_each_pass() {
        let mut s = BatchStream::new(3, 1);
        let mut b = Vec::new();
        s.fill(&mut b, 6);
        let mut first: Vec<usize> = b[..3].to_vec();
        let mut second: Vec<usize> = b[3..].to_vec();
        first.sort();
        second.sort();
        assert_eq!(first, vec![0, 1, 2]);
        assert_eq!(second, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_empty_and_misshapen_examples() {
        let data = blobs(1, 5);
        let arch = ArchSpec::new(2, vec![], 2);
        let cfg = TrainConfig::default();
        assert!(train_with_early_stopping(&arch, &[], &data, &cfg).is_err());
        let t = SoftTarget::one_hot(0, 2).unwrap();
        let x = [1.0, 2.0, 3.0];
        assert!(train_with_early_stopping(&arch, &[(&x[..], &t)], &data, &cfg).is_err());
    }
}
