//! Experiment configuration as flat `key = value` text.
//!
//! Lines are `key = value`; `#` starts a comment. `train.*` keys set both
//! training phases, `pretrain.*` and `finetune.*` override one of them. Later
//! occurrences of a key win, which is how command-line overrides apply.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::SyntheticSpec;
use crate::distill::{DistillConfig, KLimit};
use crate::learner::TrainConfig;
use crate::{Error, Result};

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.0025, 0.005, 0.01, 0.05, 0.2, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Seeded from the experiment's master seed.
    Synthetic {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
    },
    /// Labelled CSV tables; a `.classes` file next to each names the classes.
    Files {
        train: PathBuf,
        validation: PathBuf,
        test: PathBuf,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        DataSource::Synthetic {
            classes: s.classes,
            per_class: s.per_class,
            dim: s.dim,
            spread: s.spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Labelled fractions, strictly increasing in (0, 1].
    pub fractions: Vec<f64>,
    pub runs: usize,
    pub early_stop_fraction: f64,
    pub balance_labelled: bool,
    pub hidden: Vec<usize>,
    pub pretrain: TrainConfig,
    /// Also trains the teacher and the baseline.
    pub finetune: TrainConfig,
    pub iterations: usize,
    pub distill: DistillConfig,
    pub fresh_init: bool,
    pub jobs: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSource::default(),
            fractions: DEFAULT_FRACTIONS.to_vec(),
            runs: 5,
            early_stop_fraction: 0.01,
            balance_labelled: false,
            hidden: vec![32],
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::default(),
            iterations: 5,
            distill: DistillConfig {
                k: KLimit::PoolFraction(0.8),
                p: None,
            },
            fresh_init: true,
            jobs: 1,
            out: PathBuf::from("results"),
        }
    }
}

/// Ordered `key -> value` pairs, comments and blank lines removed.
pub type ConfigMap = BTreeMap<String, String>;

/// Parses `key = value` lines into `map`, overwriting earlier values.
pub fn parse_config_text(text: &str, source: &str, map: &mut ConfigMap) -> Result<()> {
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            source_name: source.to_string(),
            line: n + 1,
            message: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                source_name: source.to_string(),
                line: n + 1,
                message: "empty key".into(),
            });
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(())
}

pub fn read_config_file(path: &Path, map: &mut ConfigMap) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text, &path.display().to_string(), map)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn set_train(cfg: &mut TrainConfig, key: &str, field: &str, value: &str) -> Result<bool> {
    match field {
        "learning_rate" => cfg.learning_rate = parse(key, value)?,
        "batch_size" => cfg.batch_size = parse(key, value)?,
        "steps_per_epoch" => cfg.steps_per_epoch = parse(key, value)?,
        "max_epochs" => cfg.max_epochs = parse(key, value)?,
        "patience" => cfg.patience = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn synthetic_mut(data: &mut DataSource) -> (&mut usize, &mut usize, &mut usize, &mut f64) {
    if !matches!(data, DataSource::Synthetic { .. }) {
        *data = DataSource::default();
    }
    match data {
        DataSource::Synthetic {
            classes,
            per_class,
            dim,
            spread,
        } => (classes, per_class, dim, spread),
        DataSource::Files { .. } => unreachable!(),
    }
}

impl ExperimentConfig {
    /// Builds a config from defaults plus `map`. Unknown keys are errors.
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let mut cfg = Self::default();
        let source = map
            .get("data.source")
            .map(String::as_str)
            .unwrap_or("synthetic");
        let files = match source {
            "synthetic" => false,
            "files" => true,
            other => {
                return Err(Error::Config(format!(
                    "data.source: unknown source {other:?}"
                )))
            }
        };
        if files {
            let path = |k: &str| {
                map.get(k)
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config(format!("data.source = files requires {k}")))
            };
            cfg.data = DataSource::Files {
                train: path("data.train")?,
                validation: path("data.validation")?,
                test: path("data.test")?,
            };
        }

        // train.* first so that pretrain.* / finetune.* override it.
        for (key, value) in map.iter().filter(|(k, _)| k.starts_with("train.")) {
            let field = &key["train.".len()..];
            let a = set_train(&mut cfg.pretrain, key, field, value)?;
            set_train(&mut cfg.finetune, key, field, value)?;
            if !a {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }

        for (key, value) in map {
            let key = key.as_str();
            let value = value.as_str();
            if key.starts_with("train.") || key == "data.source" {
                continue;
            }
            if let Some(field) = key.strip_prefix("pretrain.") {
                if set_train(&mut cfg.pretrain, key, field, value)? {
                    continue;
                }
            }
            if let Some(field) = key.strip_prefix("finetune.") {
                if set_train(&mut cfg.finetune, key, field, value)? {
                    continue;
                }
            }
            match key {
                "seed" => cfg.seed = parse(key, value)?,
                "runs" => cfg.runs = parse(key, value)?,
                "jobs" => cfg.jobs = parse(key, value)?,
                "out" => cfg.out = PathBuf::from(value),
                "data.train" | "data.validation" | "data.test" if files => {}
                "data.classes" if !files => *synthetic_mut(&mut cfg.data).0 = parse(key, value)?,
                "data.per_class" if !files => *synthetic_mut(&mut cfg.data).1 = parse(key, value)?,
                "data.dim" if !files => *synthetic_mut(&mut cfg.data).2 = parse(key, value)?,
                "data.spread" if !files => *synthetic_mut(&mut cfg.data).3 = parse(key, value)?,
                "split.fractions" => cfg.fractions = parse_list(key, value)?,
                "split.early_stop_fraction" => cfg.early_stop_fraction = parse(key, value)?,
                "split.balance_labelled" => cfg.balance_labelled = parse_bool(key, value)?,
                "arch.hidden" => cfg.hidden = parse_list(key, value)?,
                "chain.iterations" => cfg.iterations = parse(key, value)?,
                "chain.fresh_init" => cfg.fresh_init = parse_bool(key, value)?,
                "chain.k" => {
                    cfg.distill.k = value
                        .parse::<KLimit>()
                        .map_err(|e| Error::Config(format!("{key}: {e}")))?
                }
                "chain.p" => {
                    cfg.distill.p = match value {
                        "all" | "none" => None,
                        v => Some(parse(key, v)?),
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "unknown or inapplicable key {key:?} (data.source = {source})"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.fractions.is_empty() {
            return bad("split.fractions is empty".into());
        }
        if self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad(format!(
                "split.fractions must lie in (0, 1]: {:?}",
                self.fractions
            ));
        }
        if self.fractions.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "split.fractions must be strictly increasing: {:?}",
                self.fractions
            ));
        }
        if !(0.0..1.0).contains(&self.early_stop_fraction) {
            return bad(format!(
                "split.early_stop_fraction must lie in [0, 1), got {}",
                self.early_stop_fraction
            ));
        }
        if self.runs == 0 || self.jobs == 0 || self.iterations == 0 {
            return bad("runs, jobs and chain.iterations must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!(
                "arch.hidden widths must be positive: {:?}",
                self.hidden
            ));
        }
        for (name, t) in [("pretrain", &self.pretrain), ("finetune", &self.finetune)] {
            t.validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if let DataSource::Synthetic {
            classes,
            per_class,
            dim,
            spread,
        } = self.data
        {
            if classes < 2 || dim == 0 || per_class < 10 || !(spread > 0.0 && spread.is_finite()) {
                return bad(format!(
                    "synthetic data needs classes >= 2, per_class >= 10, dim >= 1 and a positive spread; got {classes}/{per_class}/{dim}/{spread}"
                ));
            }
            self.distill
                .validate(classes)
                .map_err(|e| Error::Config(format!("chain: {e}")))?;
        }
        Ok(())
    }

    /// Effective configuration in the same `key = value` form it is read
    /// from. Parsing the output yields an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(s, "seed = {}", self.seed);
        match &self.data {
            DataSource::Synthetic {
                classes,
                per_class,
                dim,
                spread,
            } => {
                let _ = writeln!(s, "data.source = synthetic");
                let _ = writeln!(s, "data.classes = {classes}");
                let _ = writeln!(s, "data.per_class = {per_class}");
                let _ = writeln!(s, "data.dim = {dim}");
                let _ = writeln!(s, "data.spread = {spread}");
            }
            DataSource::Files {
                train,
                validation,
                test,
            } => {
                let _ = writeln!(s, "data.source = files");
                let _ = writeln!(s, "data.train = {}", train.display());
                let _ = writeln!(s, "data.validation = {}", validation.display());
                let _ = writeln!(s, "data.test = {}", test.display());
            }
        }
        let _ = writeln!(s, "split.fractions = {}", list(&self.fractions));
        let _ = writeln!(
            s,
            "split.early_stop_fraction = {}",
            self.early_stop_fraction
        );
        let _ = writeln!(s, "split.balance_labelled = {}", self.balance_labelled);
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "arch.hidden = {}", hidden.join(", "));
        for (name, t) in [("pretrain", &self.pretrain), ("finetune", &self.finetune)] {
            let _ = writeln!(s, "{name}.learning_rate = {}", t.learning_rate);
            let _ = writeln!(s, "{name}.batch_size = {}", t.batch_size);
            let _ = writeln!(s, "{name}.steps_per_epoch = {}", t.steps_per_epoch);
            let _ = writeln!(s, "{name}.max_epochs = {}", t.max_epochs);
            let _ = writeln!(s, "{name}.patience = {}", t.patience);
        }
        let _ = writeln!(s, "chain.iterations = {}", self.iterations);
        let _ = writeln!(s, "chain.k = {}", self.distill.k);
        match self.distill.p {
            Some(p) => {
                let _ = writeln!(s, "chain.p = {p}");
            }
            None => {
                let _ = writeln!(s, "chain.p = all");
            }
        }
        let _ = writeln!(s, "chain.fresh_init = {}", self.fresh_init);
        let _ = writeln!(s, "runs = {}", self.runs);
        let _ = writeln!(s, "jobs = {}", self.jobs);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_text(text: &str) -> Result<ExperimentConfig> {
        let mut map = ConfigMap::new();
        parse_config_text(text, "test", &mut map)?;
        ExperimentConfig::from_map(&map)
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(from_text(&cfg.to_config_string()).unwrap(), cfg);
    }

    #[test]
    fn train_keys_feed_both_phases_and_phase_keys_override() {
        let cfg = from_text(
            "# comment\ntrain.learning_rate = 0.01\nfinetune.learning_rate = 0.002  # inline\n\ntrain.patience=3\n",
        )
        .unwrap();
        assert_eq!(cfg.pretrain.learning_rate, 0.01);
        assert_eq!(cfg.finetune.learning_rate, 0.002);
        assert_eq!((cfg.pretrain.patience, cfg.finetune.patience), (3, 3));
    }

    #[test]
    fn parses_lists_and_chain_keys() {
        let cfg = from_text(
            "split.fractions = 0.01, 0.2\narch.hidden =\nchain.k = inf\nchain.p = 3\nchain.fresh_init = no\n",
        )
        .unwrap();
        assert_eq!(cfg.fractions, vec![0.01, 0.2]);
        assert!(cfg.hidden.is_empty());
        assert_eq!(cfg.distill.k, KLimit::Unlimited);
        assert_eq!(cfg.distill.p, Some(3));
        assert!(!cfg.fresh_init);
        assert_eq!(from_text(&cfg.to_config_string()).unwrap(), cfg);
    }

    #[test]
    fn file_source_needs_all_paths() {
        let cfg = from_text(
            "data.source = files\ndata.train=a.csv\ndata.validation=b.csv\ndata.test=c.csv",
        )
        .unwrap();
        assert!(matches!(cfg.data, DataSource::Files { .. }));
        assert_eq!(from_text(&cfg.to_config_string()).unwrap(), cfg);
        assert!(matches!(
            from_text("data.source = files\ndata.train=a.csv"),
            Err(Error::Config(_))
        ));
        assert!(from_text(
            "data.source = files\ndata.train=a\ndata.validation=b\ndata.test=c\ndata.dim=3"
        )
        .is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "bogus = 1",
            "train.bogus = 1",
            "runs = 0",
            "runs = -1",
            "split.fractions = 0.2, 0.1",
            "split.fractions = 0, 0.1",
            "split.fractions = 1.5",
            "train.learning_rate = -1",
            "chain.p = 10",
            "chain.k = 0",
            "data.classes = 1",
            "split.balance_labelled = maybe",
        ] {
            assert!(matches!(from_text(text), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(
            from_text("no equals sign"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn later_values_win() {
        let mut map = ConfigMap::new();
        parse_config_text("seed = 1\nruns = 2", "file", &mut map).unwrap();
        parse_config_text("seed = 9", "cli", &mut map).unwrap();
        let cfg = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!((cfg.seed, cfg.runs), (9, 2));
    }
}
