use ndarray::{Array1, Array2, Zip};

use super::{Gradients, MlpModel};
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for every layer of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<(Array2<f64>, Array1<f64>)>,
    second: Vec<(Array2<f64>, Array1<f64>)>,
}

impl AdamState {
    pub const DEFAULT_LEARNING_RATE: f64 = 0.001;

    pub fn new(model: &MlpModel, learning_rate: f64) -> Self {
        let zeros: Vec<_> = model
            .layers()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. Nothing is modified if any gradient is non-finite or
/// shapes disagree.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let names = model.layer_names();
    if grads.0.len() != names.len() || state.first.len() != names.len() {
        return Err(Error::Shape {
            branch: "optimizer".into(),
            expected: names.len(),
            actual: grads.0.len(),
        });
    }
    for ((layer, grad), name) in model.layers().zip(&grads.0).zip(&names) {
        if layer.weights.dim() != grad.weights.dim() || layer.bias.len() != grad.bias.len() {
            return Err(Error::Shape {
                branch: name.clone(),
                expected: layer.num_parameters(),
                actual: grad.weights.len() + grad.bias.len(),
            });
        }
        if grad.weights.iter().chain(grad.bias.iter()).any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(name.clone()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;

    let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (((layer, grad), first), second) in model
        .layers_mut()
        .zip(&grads.0)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        Zip::from(&mut layer.weights)
            .and(&grad.weights)
            .and(&mut first.0)
            .and(&mut second.0)
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&grad.bias)
            .and(&mut first.1)
            .and(&mut second.1)
            .for_each(update);
    }
    Ok(())
}
