use super::ModelParams;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam step, in place. On error neither `params` nor
/// `state` is modified.
pub fn adam_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(Error::invalid(
            "parameter, gradient and moment shapes differ",
        ));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let t = state.t + 1;
    let bias1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(t as i32);

    let mut next_params = params.clone();
    let mut next_state = AdamState {
        m: state.m.clone(),
        v: state.v.clone(),
        t,
    };
    let tensors = next_params
        .tensors_mut()
        .zip(grads.tensors())
        .zip(next_state.m.tensors_mut().zip(next_state.v.tensors_mut()));
    for ((theta, g), (m, v)) in tensors {
        for i in 0..theta.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    if !next_params.is_finite() {
        return Err(Error::Numeric(
            "Adam step produced non-finite parameters".into(),
        ));
    }
    *params = next_params;
    *state = next_state;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::Layer;

    fn scalar(x: f64) -> ModelParams {
        let mut l = Layer::zeros(1, 1);
        l.weights[0] = x;
        ModelParams::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.5);
        let mut g = scalar(0.2);
        g.layers_mut()[0].bias[0] = 0.0;
        let mut s = AdamState::new(&p);
        adam_update(&mut p, &g, &mut s, 0.001).unwrap();
        // m_hat = 0.2, v_hat = 0.04 at t = 1, so the step is lr * 0.2 / (0.2 + eps).
        let expected = 0.5 - 0.001 * 0.2 / (0.2 + ADAM_EPS);
        assert!((p.layers()[0].weights[0] - expected).abs() < 1e-15);
        assert!((p.layers()[0].weights[0] - 0.499).abs() < 1e-9);
        assert_eq!(s.t, 1);
        assert!(s.v.tensors().all(|t| t.iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn zero_gradient_is_a_no_op_on_params() {
        let mut p = scalar(0.5);
        let g = scalar(0.0);
        let mut s = AdamState::new(&p);
        adam_update(&mut p, &g, &mut s, 0.1).unwrap();
        assert_eq!(p, scalar(0.5));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn rejects_non_finite_and_mismatched() {
        let mut p = scalar(0.5);
        let mut s = AdamState::new(&p);
        let mut nan = scalar(0.0);
        nan.layers_mut()[0].weights[0] = f64::NAN;
        assert!(adam_update(&mut p, &nan, &mut s, 0.1).is_err());
        assert_eq!(s.t, 0);
        let other = ModelParams::from_layers(vec![Layer::zeros(2, 1)]).unwrap();
        assert!(adam_update(&mut p, &other, &mut s, 0.1).is_err());
    }
}
