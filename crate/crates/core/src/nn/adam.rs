//! Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).

use super::layer::{DenseLayer, LayerParams};
use super::mlp::{Mlp, MlpGrads};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: Vec<LayerParams<T>>,
    pub second: Vec<LayerParams<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like(layers: &[DenseLayer<T>]) -> Self {
        let z: Vec<_> = layers.iter().map(|l| LayerParams::zeros(l.inputs(), l.outputs())).collect();
        Self {
            step: 0,
            first: z.clone(),
            second: z,
        }
    }

    pub(crate) fn matches(&self, layers: &[DenseLayer<T>]) -> bool {
        let same = |m: &Vec<LayerParams<T>>| {
            m.len() == layers.len()
                && m.iter()
                    .zip(layers)
                    .all(|(p, l)| p.weights.len() == l.params.weights.len() && p.bias.len() == l.params.bias.len())
        };
        same(&self.first) && same(&self.second)
    }

    pub(crate) fn cast<U: Scalar>(&self) -> AdamState<U> {
        let conv = |v: &Vec<LayerParams<T>>| {
            v.iter()
                .map(|p| LayerParams {
                    weights: p.weights.iter().map(|x| U::from_f64(x.as_f64())).collect(),
                    bias: p.bias.iter().map(|x| U::from_f64(x.as_f64())).collect(),
                })
                .collect()
        };
        AdamState {
            step: self.step,
            first: conv(&self.first),
            second: conv(&self.second),
        }
    }
}

impl<T: Scalar> Mlp<T> {
    /// One Adam update with learning rate `lr`. A non-finite gradient aborts
    /// before anything is modified and names the offending parameter.
    pub fn adam_step(&mut self, grads: &MlpGrads<T>, lr: f64, cfg: &AdamConfig) -> Result<()> {
        if grads.layers.len() != self.layers().len()
            || grads
                .layers
                .iter()
                .zip(self.layers())
                .any(|(g, l)| g.weights.len() != l.params.weights.len() || g.bias.len() != l.params.bias.len())
        {
            return Err(Error::domain("gradient shape does not match the network"));
        }
        for (li, g) in grads.layers.iter().enumerate() {
            if let Some(idx) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Training {
                    location: format!("layer {li} parameter {idx}"),
                    message: "non-finite gradient".into(),
                });
            }
        }

        let step = self.adam.step + 1;
        let b1 = T::from_f64(cfg.beta1);
        let b2 = T::from_f64(cfg.beta2);
        let one_m_b1 = T::from_f64(1.0 - cfg.beta1);
        let one_m_b2 = T::from_f64(1.0 - cfg.beta2);
        let bc1 = T::from_f64(1.0 - cfg.beta1.powf(step as f64));
        let bc2 = T::from_f64(1.0 - cfg.beta2.powf(step as f64));
        let eps = T::from_f64(cfg.eps);
        let lr_t = T::from_f64(lr);

        let AdamState { first, second, .. } = &mut self.adam;
        for (li, layer) in self.layers.iter_mut().enumerate() {
            let params = layer.params.iter_mut();
            let g = grads.layers[li].iter();
            let m = first[li].iter_mut();
            let v = second[li].iter_mut();
            for (((p, &g), m), v) in params.zip(g).zip(m).zip(v) {
                *m = b1 * *m + one_m_b1 * g;
                *v = b2 * *v + one_m_b2 * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.adam.step = step;
        self.bump_version();
        Ok(())
    }
}
