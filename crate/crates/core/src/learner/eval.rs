use super::{argmax, forward, ModelParams};
use crate::dataset::DataTable;
use crate::{Error, Result};

/// `counts[i][j]`: samples of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 || counts.iter().any(|row| row.len() != c) {
            return Err(Error::invalid(
                "confusion matrix must be square and non-empty",
            ));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid("truth and prediction lengths differ"));
        }
        let mut m = Self::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::invalid(format!(
                    "class index out of range ({t}, {p})"
                )));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Trace over total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.correct() as f64 / total as f64,
        }
    }

    /// Per true class recall; `None` for classes with no samples.
    pub fn recall(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Hard predictions, ties to the lowest class index.
pub fn predict<X: AsRef<[f64]>>(params: &ModelParams, features: &[X]) -> Result<Vec<usize>> {
    Ok(forward(params, features)?
        .iter()
        .map(|p| argmax(p))
        .collect())
}

pub fn evaluate(params: &ModelParams, table: &DataTable) -> Result<Evaluation> {
    if table.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty table"));
    }
    if table.num_classes() != params.output_dim() {
        return Err(Error::invalid(format!(
            "table has {} classes, model outputs {}",
            table.num_classes(),
            params.output_dim()
        )));
    }
    let truth = table.labels()?;
    let predicted = predict(params, &table.features())?;
    let confusion = ConfusionMatrix::from_predictions(&truth, &predicted, table.num_classes())?;
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        confusion,
    })
}
