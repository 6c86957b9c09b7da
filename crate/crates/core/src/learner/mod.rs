//! Dense feed-forward softmax classifier, trained from scratch.
//!
//! Hidden layers are affine + rectifier; the output layer is affine +
//! softmax. Training minimizes the mean cross-entropy against soft targets
//! with Adam and keeps the epoch whose early-stop accuracy is highest.

mod adam;
mod checkpoint;
mod eval;
mod network;
mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adam::{adam_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use eval::{evaluate, predict, ConfusionMatrix, Evaluation};
pub use network::{backward, batch_loss, forward, init_params, soft_cross_entropy};
pub use train::{
    train_from, train_with_early_stopping, EpochRecord, TrainConfig, TrainHistory, INIT_SCHEME,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    /// Hidden layer widths; empty means plain softmax regression.
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl ArchSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid(format!(
                "architecture widths must be positive: {self:?}"
            )));
        }
        if self.output < 2 {
            return Err(Error::invalid("a classifier needs at least 2 outputs"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.output);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One affine layer. `weights` is row-major `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weights[out * self.fan_in + input]
    }
}

/// Weights of every layer. Also used for gradients and Adam moments, which
/// share the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl ModelParams {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a model needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in == 0 || l.fan_out == 0 {
                return Err(Error::invalid(format!("layer {i} has a zero width")));
            }
            if l.weights.len() != l.fan_in * l.fan_out || l.bias.len() != l.fan_out {
                return Err(Error::invalid(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].fan_out != l.fan_in {
                return Err(Error::invalid(format!(
                    "layer {i} expects {} inputs, previous layer emits {}",
                    l.fan_in,
                    layers[i - 1].fan_out
                )));
            }
        }
        let params = Self { layers };
        if !params.is_finite() {
            return Err(Error::Numeric(
                "model parameters contain non-finite values".into(),
            ));
        }
        Ok(params)
    }

    pub fn zeros(arch: &ArchSpec) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            layers: arch
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer::zeros(i, o))
                .collect(),
        })
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            input_dim: self.input_dim(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.fan_out)
                .collect(),
            output: self.output_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameter slices in a fixed order (per layer: weights, bias).
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.fan_in == b.fan_in && a.fan_out == b.fan_out)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

/// A class-probability vector used as a training target.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftTarget(Vec<f64>);

impl SoftTarget {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("empty target"));
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(format!(
                "target entries must be finite and non-negative: {probabilities:?}"
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(format!("target sums to {sum}, not 1")));
        }
        Ok(Self(probabilities))
    }

    pub(crate) fn new_unchecked(probabilities: Vec<f64>) -> Self {
        Self(probabilities)
    }

    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::invalid(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut p = vec![0.0; classes];
        p[class] = 1.0;
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SoftTarget {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Argmax with ties going to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_shapes_chain() {
        let arch = ArchSpec::new(4, vec![8, 3], 2);
        assert_eq!(arch.layer_shapes(), vec![(4, 8), (8, 3), (3, 2)]);
        let p = ModelParams::zeros(&arch).unwrap();
        assert_eq!(p.arch(), arch);
        assert_eq!(p.num_params(), 4 * 8 + 8 + 8 * 3 + 3 + 3 * 2 + 2);
        assert!(ModelParams::zeros(&ArchSpec::new(4, vec![0], 2)).is_err());
        assert!(ModelParams::zeros(&ArchSpec::new(4, vec![], 1)).is_err());
    }

    #[test]
    fn from_layers_checks_chaining() {
        assert!(ModelParams::from_layers(vec![Layer::zeros(3, 4), Layer::zeros(5, 2)]).is_err());
        let mut bad = Layer::zeros(2, 2);
        bad.weights[0] = f64::NAN;
        assert!(ModelParams::from_layers(vec![bad]).is_err());
    }

    #[test]
    fn soft_target_validation() {
        assert!(SoftTarget::new(vec![0.5, 0.5]).is_ok());
        assert!(SoftTarget::new(vec![0.5, 0.6]).is_err());
        assert!(SoftTarget::new(vec![1.5, -0.5]).is_err());
        assert_eq!(
            SoftTarget::one_hot(1, 3).unwrap().as_slice(),
            &[0.0, 1.0, 0.0]
        );
        assert!(SoftTarget::one_hot(3, 3).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0 / 9.0; 9]), 0);
    }
}
