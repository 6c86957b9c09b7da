//! Feature tables, class catalogs and the unlabelled pool.

mod io;
mod normalize;
mod split;
mod synthetic;

use std::collections::{BTreeMap, HashSet};

use crate::{Error, Result};

pub use io::{read_catalog, read_table, read_table_with_catalog, write_catalog, write_table};
pub use normalize::{normalize, Normalizer};
pub use split::{make_splits, SplitAudit, SplitResult, SplitSpec};
pub use synthetic::{generate_synthetic, GaussianMixture, SyntheticData, SyntheticSpec};

/// The nine tissue classes of the colorectal histology benchmark, in index order.
pub const DEFAULT_CLASS_NAMES: [&str; 9] = [
    "ADI", "BACK", "DEB", "LYM", "MUC", "MUS", "NORM", "STR", "TUM",
];

/// Ordered, unique class names. Index `i` in a label refers to `names()[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCatalog {
    names: Vec<String>,
}

impl ClassCatalog {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::invalid(format!(
                "a class catalog needs at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() || name.contains(',') || name.contains('\n') {
                return Err(Error::invalid(format!("invalid class name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// ADI, BACK, DEB, LYM, MUC, MUS, NORM, STR, TUM.
    pub fn histology() -> Self {
        Self {
            names: DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// `c0 .. c{n-1}`, or the histology catalog when `n == 9`.
    pub fn for_count(n: usize) -> Result<Self> {
        if n == DEFAULT_CLASS_NAMES.len() {
            Ok(Self::histology())
        } else {
            Self::new((0..n).map(|i| format!("c{i}")))
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

impl Sample {
    pub fn new(id: u64, features: Vec<f64>, label: Option<usize>) -> Self {
        Self {
            id,
            features,
            label,
        }
    }
}

/// A validated list of samples sharing one feature dimension and catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    catalog: ClassCatalog,
    dim: usize,
    samples: Vec<Sample>,
}

impl DataTable {
    pub fn new(catalog: ClassCatalog, dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::invalid(format!(
                    "sample {} has {} features, table dimension is {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if let Some(label) = s.label {
                if label >= catalog.len() {
                    return Err(Error::invalid(format!(
                        "sample {} has label {label} outside a {}-class catalog",
                        s.id,
                        catalog.len()
                    )));
                }
            }
            if !ids.insert(s.id) {
                return Err(Error::invalid(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self {
            catalog,
            dim,
            samples,
        })
    }

    pub fn empty(catalog: ClassCatalog, dim: usize) -> Result<Self> {
        Self::new(catalog, dim, Vec::new())
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn num_classes(&self) -> usize {
        self.catalog.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.features.as_slice()).collect()
    }

    pub fn is_fully_labelled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    /// Labels of every sample; fails on the first unlabelled one.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.samples
            .iter()
            .map(|s| {
                s.label
                    .ok_or_else(|| Error::invalid(format!("sample {} is unlabelled", s.id)))
            })
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for label in self.samples.iter().filter_map(|s| s.label) {
            counts[label] += 1;
        }
        counts
    }

    /// Same table with every feature vector passed through `f`.
    pub(crate) fn map_features(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> DataTable {
        DataTable {
            catalog: self.catalog.clone(),
            dim: self.dim,
            samples: self
                .samples
                .iter()
                .map(|s| Sample::new(s.id, f(&s.features), s.label))
                .collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        catalog: ClassCatalog,
        dim: usize,
        samples: Vec<Sample>,
    ) -> Self {
        Self {
            catalog,
            dim,
            samples,
        }
    }
}

/// True labels of pool samples. Deliberately opaque: nothing outside this
/// crate can read them, and inside the crate only the pseudo-label quality
/// diagnostic does.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLabels(BTreeMap<u64, usize>);

impl HiddenLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn get(&self, id: u64) -> Option<usize> {
        self.0.get(&id).copied()
    }
}

/// The unlabelled pool. Its table carries no labels; the labels the
/// samples had before splitting are parked in [`HiddenLabels`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    table: DataTable,
    hidden: HiddenLabels,
}

impl Pool {
    /// Strips labels from `table`, keeping them only as hidden diagnostics.
    pub fn from_table(table: DataTable) -> Self {
        let mut hidden = BTreeMap::new();
        let mut samples = table.samples;
        for s in &mut samples {
            if let Some(label) = s.label.take() {
                hidden.insert(s.id, label);
            }
        }
        Self {
            table: DataTable::from_parts_unchecked(table.catalog, table.dim, samples),
            hidden: HiddenLabels(hidden),
        }
    }

    pub fn table(&self) -> &DataTable {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn hidden_count(&self) -> usize {
        self.hidden.len()
    }

    pub(crate) fn hidden_labels(&self) -> &HiddenLabels {
        &self.hidden
    }

    pub(crate) fn map_features(&self, f: impl FnMut(&[f64]) -> Vec<f64>) -> Pool {
        Pool {
            table: self.table.map_features(f),
            hidden: self.hidden.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(labels: &[Option<usize>]) -> DataTable {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Sample::new(i as u64, vec![i as f64], l))
            .collect();
        DataTable::new(ClassCatalog::for_count(3).unwrap(), 1, samples).unwrap()
    }

    #[test]
    fn catalog_rejects_duplicates_and_singletons() {
        assert!(ClassCatalog::new(["a"]).is_err());
        assert!(ClassCatalog::new(["a", "a"]).is_err());
        assert!(ClassCatalog::new(["a", "b,c"]).is_err());
        let cat = ClassCatalog::histology();
        assert_eq!(cat.len(), 9);
        assert_eq!(cat.index_of("TUM"), Some(8));
        assert_eq!(cat.index_of("ADI"), Some(0));
    }

    #[test]
    fn table_validates_shape_labels_and_ids() {
        let cat = ClassCatalog::for_count(2).unwrap();
        assert!(DataTable::new(cat.clone(), 2, vec![Sample::new(0, vec![1.0], None)]).is_err());
        assert!(DataTable::new(cat.clone(), 1, vec![Sample::new(0, vec![1.0], Some(2))]).is_err());
        let dup = vec![
            Sample::new(3, vec![1.0], None),
            Sample::new(3, vec![2.0], None),
        ];
        assert!(DataTable::new(cat.clone(), 1, dup).is_err());
        assert!(DataTable::new(cat, 0, vec![]).is_err());
    }

    #[test]
    fn pool_hides_labels() {
        let pool = Pool::from_table(table(&[Some(0), Some(2), None]));
        assert!(pool.table().samples().iter().all(|s| s.label.is_none()));
        assert_eq!(pool.hidden_count(), 2);
        assert_eq!(pool.hidden_labels().get(1), Some(2));
        assert_eq!(pool.hidden_labels().get(2), None);
    }

    #[test]
    fn labels_fail_on_unlabelled() {
        assert!(table(&[Some(0), None]).labels().is_err());
        assert_eq!(table(&[Some(0), Some(1)]).class_counts(), vec![1, 1, 0]);
    }
}
