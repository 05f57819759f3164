use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::layer::{Activation, DenseLayer, LayerParams};
use super::mlp::Mlp;
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Builds a network with layer widths `sizes` (`sizes.len() == activations.len() + 1`).
///
/// Weights are zero-mean normal: variance `2 / fan_in` for rectified and
/// linear layers, `2 / (fan_in + fan_out)` for sigmoid layers. Biases start at
/// zero. The draw order is fixed, so a seed fully determines the result.
pub fn init_params<T: Scalar>(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Mlp<T>> {
    if activations.is_empty() {
        return Err(Error::domain("cannot initialise a network without layers"));
    }
    if sizes.len() != activations.len() + 1 {
        return Err(Error::domain(format!(
            "{} widths given for {} layers",
            sizes.len(),
            activations.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(activations.len());
    for (i, &act) in activations.iter().enumerate() {
        let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::domain("layer dimensions must be non-zero"));
        }
        let var = match act {
            Activation::Sigmoid => 2.0 / (fan_in + fan_out) as f64,
            Activation::Relu | Activation::None => 2.0 / fan_in as f64,
        };
        let dist = Normal::new(0.0, var.sqrt()).expect("positive standard deviation");
        let weights: Vec<T> = (0..fan_in * fan_out).map(|_| T::from_f64(rng.sample(dist))).collect();
        let mut layer = DenseLayer::zeros(fan_in, fan_out, act);
        layer.params = LayerParams {
            weights,
            bias: vec![T::zero(); fan_out],
        };
        layers.push(layer);
    }
    Mlp::new(layers)
}
