//! Gaussian-mixture benchmark standing in for a labelled image corpus.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ClassCatalog, DataTable, Sample};
use crate::seed::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    /// Samples per class before the 8:1:1 train/validation/test split.
    pub per_class: usize,
    pub dim: usize,
    /// Isotropic standard deviation around each class mean.
    pub spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 9,
            per_class: 900,
            dim: 16,
            spread: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: DataTable,
    pub validation: DataTable,
    pub test: DataTable,
    pub mixture: GaussianMixture,
}

/// Isotropic Gaussian classes with explicit means.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub means: Vec<Vec<f64>>,
    pub spread: f64,
}

impl GaussianMixture {
    pub fn new(means: Vec<Vec<f64>>, spread: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::invalid("a mixture needs at least 2 classes"));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid(
                "class means must share a positive dimension",
            ));
        }
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::invalid(format!(
                "spread must be positive, got {spread}"
            )));
        }
        Ok(Self { means, spread })
    }

    /// Seeded unit-norm directions rescaled so the closest pair of means is
    /// exactly distance 1 apart. In one dimension the means are evenly
    /// spaced at unit steps instead.
    pub fn with_random_means(classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if dim == 1 {
            let centre = (classes - 1) as f64 / 2.0;
            let means = (0..classes).map(|c| vec![c as f64 - centre]).collect();
            return Self::new(means, spread);
        }
        let mut rng = seed::rng(seed, Stream::Synthetic);
        for _ in 0..100 {
            let dirs: Vec<Vec<f64>> = (0..classes)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect();
            let min_dist = min_pairwise_distance(&dirs);
            if min_dist > 1e-6 {
                let means = dirs
                    .into_iter()
                    .map(|d| d.into_iter().map(|x| x / min_dist).collect())
                    .collect();
                return Self::new(means, spread);
            }
        }
        Err(Error::invalid(format!(
            "could not place {classes} distinct means in {dim} dimensions"
        )))
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `per_class` samples of every class, interleaved by class, ids from `first_id`.
    pub fn sample_table(
        &self,
        catalog: &ClassCatalog,
        per_class: usize,
        first_id: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<DataTable> {
        if catalog.len() != self.classes() {
            return Err(Error::invalid(
                "catalog size differs from mixture class count",
            ));
        }
        let mut samples = Vec::with_capacity(per_class * self.classes());
        let mut id = first_id;
        for _ in 0..per_class {
            for (class, mean) in self.means.iter().enumerate() {
                let features = mean
                    .iter()
                    .map(|m| m + self.spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                samples.push(Sample::new(id, features, Some(class)));
                id += 1;
            }
        }
        DataTable::new(catalog.clone(), self.dim(), samples)
    }

    /// Index of the nearest mean; the Bayes rule for equal-prior isotropic classes.
    pub fn nearest_mean(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, m) in self.means.iter().enumerate() {
            let d: f64 = m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }
}

fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Balanced train/validation/test tables in an 8:1:1 ratio of `per_class`.
/// Ids are unique across the three tables.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.per_class == 0 {
        return Err(Error::invalid("per_class must be positive"));
    }
    let mixture =
        GaussianMixture::with_random_means(spec.classes, spec.dim, spec.spread, spec.seed)?;
    let catalog = ClassCatalog::for_count(spec.classes)?;
    let held_out = spec.per_class / 10;
    let train_per_class = spec.per_class - 2 * held_out;

    // Means consume the head of the stream; samples use an offset seed.
    let mut rng = seed::rng(crate::seed::derive_seed(spec.seed, &[1]), Stream::Synthetic);
    let train = mixture.sample_table(&catalog, train_per_class, 0, &mut rng)?;
    let next = train.len() as u64;
    let validation = mixture.sample_table(&catalog, held_out, next, &mut rng)?;
    let next = next + validation.len() as u64;
    let test = mixture.sample_table(&catalog, held_out, next, &mut rng)?;
    Ok(SyntheticData {
        train,
        validation,
        test,
        mixture,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI_OF_2: f64 = 0.977_249_868_051_820_8;

    #[test]
    fn split_sizes_follow_eight_one_one() {
        let d = generate_synthetic(&SyntheticSpec {
            classes: 9,
            per_class: 100,
            dim: 4,
            spread: 0.5,
            seed: 1,
        })
        .unwrap();
        assert_eq!(d.train.len(), 720);
        assert_eq!(d.train.class_counts(), vec![80; 9]);
        assert_eq!(d.validation.class_counts(), vec![10; 9]);
        assert_eq!(d.test.class_counts(), vec![10; 9]);
        assert_eq!(d.train.catalog(), &ClassCatalog::histology());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SyntheticSpec {
            seed: 42,
            per_class: 20,
            ..SyntheticSpec::default()
        };
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
        let other = SyntheticSpec { seed: 43, ..spec };
        assert_ne!(
            generate_synthetic(&spec).unwrap().train,
            generate_synthetic(&other).unwrap().train
        );
    }

    #[test]
    fn closest_means_are_unit_distance() {
        for (classes, dim) in [(9, 16), (3, 2), (5, 1), (2, 1)] {
            let m = GaussianMixture::with_random_means(classes, dim, 1.0, 7).unwrap();
            assert!((min_pairwise_distance(&m.means) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let base = SyntheticSpec::default();
        for spec in [
            SyntheticSpec { classes: 1, ..base },
            SyntheticSpec {
                per_class: 0,
                ..base
            },
            SyntheticSpec { dim: 0, ..base },
            SyntheticSpec {
                spread: 0.0,
                ..base
            },
            SyntheticSpec {
                spread: -1.0,
                ..base
            },
        ] {
            assert!(generate_synthetic(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn bayes_accuracy_of_two_unit_gaussians() {
        // Means at +-1 with spread 0.5: the nearest-mean rule errs with
        // probability 1 - Phi(2).
        let mixture = GaussianMixture::new(vec![vec![-1.0], vec![1.0]], 0.5).unwrap();
        let catalog = ClassCatalog::for_count(2).unwrap();
        let mut rng = seed::rng(9, Stream::Synthetic);
        let table = mixture
            .sample_table(&catalog, 500_000, 0, &mut rng)
            .unwrap();
        let correct = table
            .samples()
            .iter()
            .filter(|s| mixture.nearest_mean(&s.features) == s.label.unwrap())
            .count();
        let acc = correct as f64 / table.len() as f64;
        // Monte Carlo standard error at 1e6 draws is about 1.5e-4.
        assert!((acc - PHI_OF_2).abs() < 1e-3, "accuracy {acc}");
    }
}
