use super::{DataTable, Pool, SplitResult};
use crate::{Error, Result};

const MIN_STD: f64 = 1e-12;

/// Per-feature standardization fitted on a reference table.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Normalizer {
    /// Population mean and standard deviation of every feature. Deviations
    /// below 1e-12 are replaced by 1.
    pub fn fit(reference: &DataTable) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::invalid("cannot fit a normalizer on an empty table"));
        }
        let n = reference.len() as f64;
        let dim = reference.dim();
        let mut mean = vec![0.0; dim];
        for s in reference.samples() {
            for (m, x) in mean.iter_mut().zip(&s.features) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for s in reference.samples() {
            for ((v, x), m) in var.iter_mut().zip(&s.features).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::invalid(format!(
                "normalizer fitted on {} features, table has {dim}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, table: &DataTable) -> Result<DataTable> {
        self.check_dim(table.dim())?;
        Ok(table.map_features(|x| self.transform(x)))
    }

    pub fn apply_pool(&self, pool: &Pool) -> Result<Pool> {
        self.check_dim(pool.table().dim())?;
        Ok(pool.map_features(|x| self.transform(x)))
    }

    /// Normalizes every member of a split.
    pub fn apply_split(&self, split: &SplitResult) -> Result<SplitResult> {
        Ok(SplitResult {
            labelled: self.apply(&split.labelled)?,
            early_stop: self.apply(&split.early_stop)?,
            pool: self.apply_pool(&split.pool)?,
            audit: split.audit,
        })
    }
}

/// Fits on `reference` and transforms every table in `targets`.
pub fn normalize(
    reference: &DataTable,
    targets: &[&DataTable],
) -> Result<(Normalizer, Vec<DataTable>)> {
    let norm = Normalizer::fit(reference)?;
    let out = targets
        .iter()
        .map(|t| norm.apply(t))
        .collect::<Result<Vec<_>>>()?;
    Ok((norm, out))
}
