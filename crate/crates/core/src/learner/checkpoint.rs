//! JSON model checkpoints.
//!
//! ```json
//! {
//!   "format": "teacher-chain-checkpoint",
//!   "version": 1,
//!   "arch": {"input_dim": 16, "hidden": [32], "output": 9},
//!   "seed": 7,
//!   "init_scheme": "uniform-fan-in",
//!   "layers": [{"fan_in": 16, "fan_out": 32, "weights": [...], "bias": [...]}, ...]
//! }
//! ```
//!
//! `weights` is row-major `fan_out x fan_in`. Floats are written in their
//! shortest round-trip decimal form, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchSpec, Layer, ModelParams, INIT_SCHEME};
use crate::{Error, Result};

const FORMAT: &str = "teacher-chain-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub arch: ArchSpec,
    pub seed: u64,
    pub init_scheme: String,
    pub layers: Vec<Layer>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, seed: u64) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            arch: params.arch(),
            seed,
            init_scheme: INIT_SCHEME.to_string(),
            layers: params.layers().to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let params = ModelParams::from_layers(self.layers.clone())?;
        if params.arch() != self.arch {
            return Err(Error::invalid("checkpoint arch does not match its layers"));
        }
        Ok(params)
    }
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, seed: u64) -> Result<()> {
    let text = Checkpoint::new(params, seed).to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Returns the parameters and the training seed.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::from_json(&text)?;
    Ok((ck.params()?, ck.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::init_params;
    use proptest::prelude::*;

    #[test]
    fn file_round_trip() {
        let p = init_params(&ArchSpec::new(3, vec![5, 4], 2), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&path, &p, 11).unwrap();
        let (q, seed) = load_checkpoint(&path).unwrap();
        assert_eq!(seed, 11);
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_foreign_documents() {
        let p = init_params(&ArchSpec::new(2, vec![], 2), 1).unwrap();
        let mut ck = Checkpoint::new(&p, 1);
        ck.format = "other".into();
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());
        let mut ck = Checkpoint::new(&p, 1);
        ck.arch.hidden = vec![3];
        assert!(Checkpoint::from_json(&ck.to_json().unwrap())
            .unwrap()
            .params()
            .is_err());
    }

    proptest! {
        #[test]
        fn weights_round_trip_bit_exact(ws in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 6)) {
            let layer = Layer { fan_in: 3, fan_out: 2, weights: ws, bias: vec![1e-310, -0.1] };
            let p = ModelParams::from_layers(vec![layer]).unwrap();
            let json = Checkpoint::new(&p, 0).to_json().unwrap();
            let q = Checkpoint::from_json(&json).unwrap().params().unwrap();
            for (a, b) in p.tensors().zip(q.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
