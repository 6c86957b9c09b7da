use rand::Rng;

use super::{ArchSpec, ModelParams};
use crate::seed::{self, Stream};
use crate::{Error, Result};

const LOG_FLOOR: f64 = 1e-12;

/// Weights uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
pub fn init_params(arch: &ArchSpec, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    let mut rng = seed::rng(seed, Stream::Init);
    for layer in params.layers_mut() {
        let bound = 1.0 / (layer.fan_in as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
}

/// Per-sample activations kept for the backward pass. `acts[0]` is the
/// input, `acts[l + 1]` the output of layer `l` (rectified for hidden layers,
/// softmax probabilities for the last).
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    fn new(params: &ModelParams) -> Self {
        let mut acts = vec![vec![0.0; params.input_dim()]];
        acts.extend(params.layers().iter().map(|l| vec![0.0; l.fan_out]));
        Self { acts }
    }

    fn run(&mut self, params: &ModelParams, input: &[f64]) {
        self.acts[0].copy_from_slice(input);
        let last = params.layers().len() - 1;
        for (l, layer) in params.layers().iter().enumerate() {
            let (before, after) = self.acts.split_at_mut(l + 1);
            let x = &before[l];
            let out = &mut after[0];
            for (o, z) in out.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                *z = layer.bias[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            }
            if l < last {
                out.iter_mut().for_each(|z| *z = z.max(0.0));
            } else {
                softmax_in_place(out);
            }
        }
    }

    fn probs(&self) -> &[f64] {
        &self.acts[self.acts.len() - 1]
    }
}

fn check_input(params: &ModelParams, x: &[f64]) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::invalid(format!(
            "input has {} features, model expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("input contains non-finite values"));
    }
    Ok(())
}

/// Class probabilities for every row of `features`.
pub fn forward<X: AsRef<[f64]>>(params: &ModelParams, features: &[X]) -> Result<Vec<Vec<f64>>> {
    let mut trace = Trace::new(params);
    features
        .iter()
        .map(|x| {
            let x = x.as_ref();
            check_input(params, x)?;
            trace.run(params, x);
            Ok(trace.probs().to_vec())
        })
        .collect()
}

/// `-sum_c target_c * ln(max(probs_c, 1e-12))`.
pub fn soft_cross_entropy(probs: &[f64], target: &[f64]) -> Result<f64> {
    if probs.len() != target.len() {
        return Err(Error::invalid(format!(
            "probability vector has {} entries, target has {}",
            probs.len(),
            target.len()
        )));
    }
    Ok(cross_entropy_unchecked(probs, target))
}

fn cross_entropy_unchecked(probs: &[f64], target: &[f64]) -> f64 {
    let loss: f64 = probs
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.max(LOG_FLOOR).ln())
        .sum();
    // -0.0 when every term vanishes
    loss.max(0.0)
}

/// Gradient of the mean soft cross-entropy over the batch.
pub fn backward<X: AsRef<[f64]>, T: AsRef<[f64]>>(
    params: &ModelParams,
    features: &[X],
    targets: &[T],
) -> Result<ModelParams> {
    loss_and_gradient(params, features, targets).map(|(_, g)| g)
}

pub(crate) fn loss_and_gradient<X: AsRef<[f64]>, T: AsRef<[f64]>>(
    params: &ModelParams,
    features: &[X],
    targets: &[T],
) -> Result<(f64, ModelParams)> {
    if features.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} targets",
            features.len(),
            targets.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let classes = params.output_dim();
    let scale = 1.0 / features.len() as f64;
    let mut grad = params.zeros_like();
    let mut trace = Trace::new(params);
    let max_width = params
        .layers()
        .iter()
        .map(|l| l.fan_in.max(l.fan_out))
        .max()
        .unwrap_or(0);
    let mut delta = vec![0.0; max_width];
    let mut prev = vec![0.0; max_width];
    let mut loss = 0.0;

    for (x, t) in features.iter().zip(targets) {
        let (x, t) = (x.as_ref(), t.as_ref());
        check_input(params, x)?;
        if t.len() != classes {
            return Err(Error::invalid(format!(
                "target has {} classes, model has {classes}",
                t.len()
            )));
        }
        trace.run(params, x);
        loss += cross_entropy_unchecked(trace.probs(), t);

        let out_width = classes;
        for (d, (p, t)) in delta.iter_mut().zip(trace.probs().iter().zip(t)) {
            *d = (p - t) * scale;
        }
        let mut width = out_width;
        for l in (0..params.layers().len()).rev() {
            let layer = &params.layers()[l];
            let input = &trace.acts[l];
            let g = &mut grad.layers_mut()[l];
            for (o, &d) in delta[..width].iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            // Back through the weights, then the rectifier of layer l-1.
            let prev = &mut prev[..layer.fan_in];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in delta[..width].iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (pv, w) in prev.iter_mut().zip(row) {
                    *pv += d * w;
                }
            }
            for (i, pv) in prev.iter().enumerate() {
                delta[i] = if input[i] > 0.0 { *pv } else { 0.0 };
            }
            width = layer.fan_in;
        }
    }

    if !grad.is_finite() || !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok((loss * scale, grad))
}

/// Mean soft cross-entropy of a batch.
pub fn batch_loss<X: AsRef<[f64]>, T: AsRef<[f64]>>(
    params: &ModelParams,
    features: &[X],
    targets: &[T],
) -> Result<f64> {
    let probs = forward(params, features)?;
    let mut total = 0.0;
    for (p, t) in probs.iter().zip(targets) {
        total += soft_cross_entropy(p, t.as_ref())?;
    }
    Ok(total / features.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::Layer;
    use proptest::prelude::*;

    fn softmax(z: &[f64]) -> Vec<f64> {
        let mut v = z.to_vec();
        softmax_in_place(&mut v);
        v
    }

    #[test]
    fn init_is_seeded_with_zero_bias() {
        let arch = ArchSpec::new(5, vec![7], 3);
        let a = init_params(&arch, 1).unwrap();
        assert_eq!(a, init_params(&arch, 1).unwrap());
        assert_ne!(a, init_params(&arch, 2).unwrap());
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() < bound));
    }

    #[test]
    fn init_weight_spread() {
        // Uniform(-a, a) has variance a^2 / 3.
        let arch = ArchSpec::new(1000, vec![], 1000);
        let p = init_params(&arch, 3).unwrap();
        let w = &p.layers()[0].weights;
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (1.0 / 1000f64.sqrt()) / 3f64.sqrt();
        assert!((sd / expected - 1.0).abs() < 0.05, "sd {sd} vs {expected}");
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let p = ModelParams::zeros(&ArchSpec::new(3, vec![4], 9)).unwrap();
        let out = forward(&p, &[vec![1.0, -2.0, 3.0]]).unwrap();
        assert!(out[0].iter().all(|&q| (q - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn forward_through_bias_only_model() {
        let mut layer = Layer::zeros(1, 2);
        layer.bias = vec![2f64.ln(), 0.0];
        let p = ModelParams::from_layers(vec![layer]).unwrap();
        let out = forward(&p, &[[0.0]]).unwrap();
        assert!((out[0][0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = ModelParams::zeros(&ArchSpec::new(2, vec![], 2)).unwrap();
        assert!(forward(&p, &[[f64::NAN, 0.0]]).is_err());
        assert!(forward(&p, &[[0.0]]).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let ln2 = 2f64.ln();
        assert_eq!(soft_cross_entropy(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((soft_cross_entropy(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - ln2).abs() < 1e-15);
        assert!((soft_cross_entropy(&[0.5, 0.5], &[0.5, 0.5]).unwrap() - ln2).abs() < 1e-15);
        assert!(soft_cross_entropy(&[0.5, 0.5], &[1.0]).is_err());
        // log clamp keeps the loss finite
        let l = soft_cross_entropy(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn perfect_prediction_has_zero_bias_gradient() {
        // Softmax regression with zero inputs predicts uniform; match it.
        let p = ModelParams::zeros(&ArchSpec::new(3, vec![], 4)).unwrap();
        let xs = vec![vec![0.0; 3]; 5];
        let ts = vec![vec![0.25; 4]; 5];
        let g = backward(&p, &xs, &ts).unwrap();
        assert!(g.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let arch = ArchSpec::new(3, vec![5], 3);
        let p = init_params(&arch, 8).unwrap();
        let xs = vec![vec![0.3, -1.2, 0.7], vec![1.1, 0.4, -0.5]];
        let ts = vec![vec![0.2, 0.5, 0.3], vec![1.0, 0.0, 0.0]];
        let g1 = backward(&p, &xs, &ts).unwrap();
        let xs2: Vec<_> = xs.iter().chain(&xs).cloned().collect();
        let ts2: Vec<_> = ts.iter().chain(&ts).cloned().collect();
        let g2 = backward(&p, &xs2, &ts2).unwrap();
        for (a, b) in g1.tensors().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_loss_matches_gradient_loss() {
        let arch = ArchSpec::new(2, vec![3], 2);
        let p = init_params(&arch, 4).unwrap();
        let xs = vec![vec![0.3, -1.2], vec![1.1, 0.4]];
        let ts = vec![vec![0.2, 0.8], vec![1.0, 0.0]];
        let (l, _) = loss_and_gradient(&p, &xs, &ts).unwrap();
        assert!((l - batch_loss(&p, &xs, &ts).unwrap()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(z in prop::collection::vec(-700.0f64..700.0, 2..12)) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn softmax_shift_invariant(z in prop::collection::vec(-30.0f64..30.0, 2..12)) {
            let shifted: Vec<f64> = z.iter().map(|v| v + 1000.0).collect();
            for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cross_entropy_is_nonnegative_and_entropy_at_match(
            raw in prop::collection::vec(0.001f64..1.0, 2..10),
            other in prop::collection::vec(0.001f64..1.0, 2..10),
        ) {
            let n = raw.len().min(other.len());
            let norm = |v: &[f64]| { let s: f64 = v[..n].iter().sum(); v[..n].iter().map(|x| x / s).collect::<Vec<_>>() };
            let (t, p) = (norm(&raw), norm(&other));
            prop_assert!(soft_cross_entropy(&p, &t).unwrap() >= 0.0);
            let entropy: f64 = t.iter().map(|x| -x * x.ln()).sum();
            prop_assert!((soft_cross_entropy(&t, &t).unwrap() - entropy).abs() < 1e-12);
        }
    }
}
