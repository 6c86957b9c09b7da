//! Seeded labelled / early-stop / pool splitting.

use rand::seq::SliceRandom;

use super::{DataTable, Pool, Sample};
use crate::seed::{self, Stream};
use crate::{Error, Result};

const FRACTION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Share of the whole training table whose labels are kept.
    pub labelled_fraction: f64,
    /// Share of the whole training table reserved for early stopping.
    pub early_stop_fraction: f64,
    pub seed: u64,
    /// Round-robin the labelled draw over classes instead of drawing uniformly.
    pub balance_labelled: bool,
}

impl SplitSpec {
    pub fn new(labelled_fraction: f64, seed: u64) -> Self {
        Self {
            labelled_fraction,
            early_stop_fraction: 0.01,
            seed,
            balance_labelled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lf = self.labelled_fraction;
        let es = self.early_stop_fraction;
        if !(lf > 0.0 && lf <= 1.0) {
            return Err(Error::invalid(format!(
                "labelled_fraction must lie in (0, 1], got {lf}"
            )));
        }
        if !(0.0..1.0).contains(&es) {
            return Err(Error::invalid(format!(
                "early_stop_fraction must lie in [0, 1), got {es}"
            )));
        }
        if lf + es > 1.0 + FRACTION_EPS {
            return Err(Error::invalid(format!(
                "labelled_fraction + early_stop_fraction = {} exceeds 1",
                lf + es
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitAudit {
    pub seed: u64,
    pub total: usize,
    pub labelled: usize,
    pub early_stop: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub labelled: DataTable,
    pub early_stop: DataTable,
    pub pool: Pool,
    pub audit: SplitAudit,
}

fn floor_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + FRACTION_EPS).floor() as usize
}

/// Splits a fully labelled training table into early-stop, labelled and pool.
///
/// The early-stop reserve (`floor(early_stop_fraction * N)`, at least one
/// sample per class) is drawn first, then `floor(labelled_fraction * N)`
/// labelled samples from the remainder. When the two fractions sum to 1 the
/// labelled set takes the entire remainder. Whatever is left becomes the
/// pool, with its labels hidden.
pub fn make_splits(train: &DataTable, spec: &SplitSpec) -> Result<SplitResult> {
    spec.validate()?;
    let labels = train.labels()?;
    let n = train.len();
    let classes = train.num_classes();
    if n == 0 {
        return Err(Error::invalid("cannot split an empty table"));
    }

    let es_count = floor_count(spec.early_stop_fraction, n);
    if es_count < classes {
        return Err(Error::invalid(format!(
            "early-stop reserve of {es_count} samples cannot cover {classes} classes"
        )));
    }
    let counts = train.class_counts();
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "class {missing} has no samples, the early-stop reserve cannot cover it"
        )));
    }
    let takes_remainder = spec.labelled_fraction + spec.early_stop_fraction >= 1.0 - FRACTION_EPS;
    let labelled_count = if takes_remainder {
        n - es_count
    } else {
        floor_count(spec.labelled_fraction, n)
    };
    if labelled_count == 0 {
        return Err(Error::invalid(format!(
            "labelled fraction {} of {n} samples selects nothing",
            spec.labelled_fraction
        )));
    }
    if es_count + labelled_count > n {
        return Err(Error::invalid(format!(
            "{es_count} early-stop + {labelled_count} labelled samples exceed {n}"
        )));
    }

    // Positions sorted by id, then Fisher-Yates shuffled.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| train.samples()[i].id);
    let mut rng = seed::rng(spec.seed, Stream::Split);
    order.shuffle(&mut rng);

    cover_all_classes(&mut order, es_count, &labels, classes);

    let (reserve, rest) = order.split_at(es_count);
    let (labelled, pool): (Vec<usize>, Vec<usize>) = if spec.balance_labelled {
        balanced_take(rest, labelled_count, &labels, classes)
    } else {
        (
            rest[..labelled_count].to_vec(),
            rest[labelled_count..].to_vec(),
        )
    };

    let audit = SplitAudit {
        seed: spec.seed,
        total: n,
        labelled: labelled.len(),
        early_stop: reserve.len(),
        pool: pool.len(),
    };
    Ok(SplitResult {
        labelled: subset(train, &labelled),
        early_stop: subset(train, reserve),
        pool: Pool::from_table(subset(train, &pool)),
        audit,
    })
}

/// Swaps samples into the first `prefix` slots of `order` until every class
/// is represented there. Each missing class takes its earliest occurrence
/// after the prefix and displaces the latest prefix member whose class is
/// represented more than once.
fn cover_all_classes(order: &mut [usize], prefix: usize, labels: &[usize], classes: usize) {
    let mut counts = vec![0usize; classes];
    for &i in &order[..prefix] {
        counts[labels[i]] += 1;
    }
    for class in 0..classes {
        if counts[class] > 0 {
            continue;
        }
        let Some(incoming) = (prefix..order.len()).find(|&j| labels[order[j]] == class) else {
            continue;
        };
        let Some(outgoing) = (0..prefix).rev().find(|&j| counts[labels[order[j]]] > 1) else {
            continue;
        };
        counts[labels[order[outgoing]]] -= 1;
        counts[class] += 1;
        order.swap(incoming, outgoing);
    }
}

fn balanced_take(
    rest: &[usize],
    count: usize,
    labels: &[usize],
    classes: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for &i in rest {
        by_class[labels[i]].push(i);
    }
    let mut cursor = vec![0usize; classes];
    let mut taken = Vec::with_capacity(count);
    while taken.len() < count {
        for class in 0..classes {
            if taken.len() == count {
                break;
            }
            if let Some(&i) = by_class[class].get(cursor[class]) {
                taken.push(i);
                cursor[class] += 1;
            }
        }
    }
    let mut chosen = vec![false; labels.len()];
    for &i in &taken {
        chosen[i] = true;
    }
    let left = rest.iter().copied().filter(|&i| !chosen[i]).collect();
    (taken, left)
}

fn subset(table: &DataTable, positions: &[usize]) -> DataTable {
    let mut samples: Vec<Sample> = positions
        .iter()
        .map(|&i| table.samples()[i].clone())
        .collect();
    samples.sort_by_key(|s| s.id);
    DataTable::from_parts_unchecked(table.catalog().clone(), table.dim(), samples)
}
