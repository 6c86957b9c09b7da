//! Pseudo-labels over the unlabelled pool and their two filters.
//!
//! The P-filter keeps the `P` largest class probabilities of each soft label
//! and renormalizes them. The K-filter groups labels by predicted class and
//! keeps the `K` most confident of each group.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::dataset::{ClassCatalog, Pool};
use crate::learner::{argmax, forward, ModelParams, SoftTarget};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub sample_id: u64,
    soft: SoftTarget,
    top_class: usize,
    confidence: f64,
}

impl PseudoLabel {
    pub fn new(sample_id: u64, soft: SoftTarget) -> Self {
        let top_class = argmax(soft.as_slice());
        let confidence = soft.as_slice()[top_class];
        Self {
            sample_id,
            soft,
            top_class,
            confidence,
        }
    }

    pub fn soft(&self) -> &SoftTarget {
        &self.soft
    }

    pub fn top_class(&self) -> usize {
        self.top_class
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Per-class cap of the K-filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KLimit {
    PerClass(usize),
    Unlimited,
    /// `round(fraction * pool size / classes)` per class, at least 1.
    PoolFraction(f64),
}

impl KLimit {
    /// Concrete cap for a pool, `None` meaning no cap.
    pub fn resolve(&self, pool_size: usize, classes: usize) -> Option<usize> {
        match *self {
            KLimit::PerClass(k) => Some(k),
            KLimit::Unlimited => None,
            KLimit::PoolFraction(f) => {
                Some(((f * pool_size as f64 / classes as f64).round() as usize).max(1))
            }
        }
    }
}

impl fmt::Display for KLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KLimit::PerClass(k) => write!(f, "{k}"),
            KLimit::Unlimited => write!(f, "inf"),
            KLimit::PoolFraction(x) => write!(f, "{}%", x * 100.0),
        }
    }
}

impl FromStr for KLimit {
    type Err = Error;

    /// `4000`, `inf`, or a pool percentage such as `80%`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(KLimit::Unlimited);
        }
        if let Some(pct) = s.strip_suffix('%') {
            let pct: f64 = pct
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("invalid K percentage {s:?}")))?;
            if !(pct > 0.0 && pct <= 100.0) {
                return Err(Error::invalid(format!(
                    "K percentage must be in (0, 100]: {s}"
                )));
            }
            return Ok(KLimit::PoolFraction(pct / 100.0));
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(KLimit::PerClass(k)),
            _ => Err(Error::invalid(format!(
                "K must be a positive integer, `inf`, or a percentage: {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub k: KLimit,
    /// Probabilities kept per label; `None` keeps all classes.
    pub p: Option<usize>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            k: KLimit::PerClass(4000),
            p: None,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if let Some(p) = self.p {
            if p == 0 || p > classes {
                return Err(Error::invalid(format!(
                    "P must lie in [1, {classes}], got {p}"
                )));
            }
        }
        match self.k {
            KLimit::PerClass(0) => Err(Error::invalid("K must be positive")),
            KLimit::PoolFraction(f) if !(f > 0.0 && f <= 1.0) => Err(Error::invalid(format!(
                "K pool fraction must lie in (0, 1], got {f}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Soft labels for every pool sample, in ascending id order.
pub fn pseudo_label_pool(model: &ModelParams, pool: &Pool) -> Result<Vec<PseudoLabel>> {
    let table = pool.table();
    if table.dim() != model.input_dim() {
        return Err(Error::invalid(format!(
            "pool has {} features, model expects {}",
            table.dim(),
            model.input_dim()
        )));
    }
    let mut samples: Vec<_> = table.samples().iter().collect();
    samples.sort_by_key(|s| s.id);
    let features: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let probs = forward(model, &features)?;
    samples
        .iter()
        .zip(probs)
        .map(|(s, p)| Ok(PseudoLabel::new(s.id, SoftTarget::new(p)?)))
        .collect()
}

/// Zeroes all but the `p` largest probabilities and renormalizes. On the
/// cut boundary the lower class index survives.
pub fn apply_p_filter(label: &PseudoLabel, p: usize) -> PseudoLabel {
    let probs = label.soft.as_slice();
    let c = probs.len();
    let p = p.clamp(1, c);
    if p == c {
        return label.clone();
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = vec![0.0; c];
    for &i in &order[..p] {
        kept[i] = probs[i];
    }
    let total: f64 = kept.iter().sum();
    kept.iter_mut().for_each(|x| *x /= total);
    PseudoLabel::new(label.sample_id, SoftTarget::new_unchecked(kept))
}

/// Keeps the `k` most confident labels of each predicted class (all of them
/// for `None`). Within a class, confidence descends and ties go to the lower
/// sample id; classes are concatenated in catalog order.
pub fn apply_k_filter(
    labels: &[PseudoLabel],
    k: Option<usize>,
    catalog: &ClassCatalog,
) -> Vec<PseudoLabel> {
    let mut by_class: Vec<Vec<&PseudoLabel>> = vec![Vec::new(); catalog.len()];
    for l in labels {
        if let Some(group) = by_class.get_mut(l.top_class) {
            group.push(l);
        }
    }
    let mut out = Vec::with_capacity(labels.len());
    for mut group in by_class {
        group.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.sample_id.cmp(&b.sample_id))
        });
        let keep = k.map_or(group.len(), |k| k.min(group.len()));
        out.extend(group.into_iter().take(keep).cloned());
    }
    out
}

/// P-filter on every label, then the K-filter on the recomputed confidences.
pub fn filter_pseudo_labels(
    labels: &[PseudoLabel],
    config: &DistillConfig,
    catalog: &ClassCatalog,
    pool_size: usize,
) -> Vec<PseudoLabel> {
    let shaped: Vec<PseudoLabel> = match config.p {
        Some(p) if p < catalog.len() => labels.iter().map(|l| apply_p_filter(l, p)).collect(),
        _ => labels.to_vec(),
    };
    apply_k_filter(&shaped, config.k.resolve(pool_size, catalog.len()), catalog)
}

/// Agreement of predicted classes with the pool's hidden labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelQuality {
    pub agreement: f64,
    /// Per true class: share of its samples whose predicted class matches.
    /// Zero for classes absent from `labels`.
    pub per_class_agreement: Vec<f64>,
    pub class_counts: Vec<usize>,
}

/// Diagnostic only: the one reader of the pool's hidden labels. Nothing it
/// returns may feed back into training or selection.
pub fn pseudo_label_quality(labels: &[PseudoLabel], pool: &Pool) -> Result<LabelQuality> {
    if labels.is_empty() {
        return Err(Error::invalid("no pseudo-labels to score"));
    }
    let classes = pool.table().num_classes();
    let hidden = pool.hidden_labels();
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for l in labels {
        let truth = hidden.get(l.sample_id).ok_or_else(|| {
            Error::invalid(format!(
                "sample {} has no hidden label in the pool",
                l.sample_id
            ))
        })?;
        counts[truth] += 1;
        if l.top_class == truth {
            hits[truth] += 1;
        }
    }
    let per_class_agreement = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &n)| if n == 0 { 0.0 } else { h as f64 / n as f64 })
        .collect();
    Ok(LabelQuality {
        agreement: hits.iter().sum::<usize>() as f64 / labels.len() as f64,
        per_class_agreement,
        class_counts: counts,
    })
}

/// CSV dump: `sample_id,top_class,confidence,p0..p{C-1}`.
pub fn write_pseudo_labels<W: Write>(out: W, labels: &[PseudoLabel], classes: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::invalid(format!("writing pseudo-labels: {e}"));
    let mut header = vec![
        "sample_id".to_string(),
        "top_class".to_string(),
        "confidence".to_string(),
    ];
    header.extend((0..classes).map(|c| format!("p{c}")));
    w.write_record(&header).map_err(io)?;
    for l in labels {
        let mut row = vec![
            l.sample_id.to_string(),
            l.top_class.to_string(),
            l.confidence.to_string(),
        ];
        row.extend(l.soft.as_slice().iter().map(|p| p.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("writing pseudo-labels: {e}")))
}
