use std::sync::atomic::{AtomicU64, Ordering};

use super::adam::AdamState;
use super::layer::{DenseLayer, LayerParams};
use super::scalar::{gemm_nn, gemm_nt, gemm_tn, Scalar};
use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// A stack of dense layers plus its optimizer state.
///
/// Every mutation of the parameters bumps an internal version so that a
/// [`ForwardCache`] taken before the change is refused by [`Mlp::backward`].
#[derive(Debug)]
pub struct Mlp<T> {
    pub(crate) layers: Vec<DenseLayer<T>>,
    pub(crate) adam: AdamState<T>,
    id: u64,
    version: u64,
}

impl<T: Scalar> Clone for Mlp<T> {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            adam: self.adam.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl<T: Scalar> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.adam == other.adam
    }
}

/// Activations recorded by [`Mlp::forward`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    owner: u64,
    version: u64,
    input: Vec<T>,
    outputs: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Output of the last layer, `batch x output_dim` row-major.
    pub fn output(&self) -> &[T] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub fn into_output(mut self) -> Vec<T> {
        self.outputs.pop().unwrap_or(self.input)
    }
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> MlpGrads<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        Self {
            layers: mlp.layers.iter().map(|l| LayerParams::zeros(l.inputs(), l.outputs())).collect(),
        }
    }

    pub fn scale(&mut self, k: T) {
        for l in &mut self.layers {
            l.iter_mut().for_each(|g| *g = *g * k);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x = *x + *y);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.iter())
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::domain("a network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::domain(format!(
                    "layer width mismatch: {} outputs feed {} inputs",
                    w[0].outputs(),
                    w[1].inputs()
                )));
            }
        }
        let adam = AdamState::zeros_like(&layers);
        Ok(Self {
            layers,
            adam,
            id: fresh_id(),
            version: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    /// Mutable access to the parameters; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    pub fn adam_state(&self) -> &AdamState<T> {
        &self.adam
    }

    pub fn set_adam_state(&mut self, state: AdamState<T>) -> Result<()> {
        if !state.matches(&self.layers) {
            return Err(Error::domain("optimizer state does not match the network shape"));
        }
        self.adam = state;
        Ok(())
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(DenseLayer::cast).collect(),
            adam: self.adam.cast(),
            id: fresh_id(),
            version: 0,
        }
    }

    /// Evaluates the network on `batch` rows of `input` (row-major).
    pub fn forward(&self, input: &[T], batch: usize) -> Result<ForwardCache<T>> {
        let in_dim = self.input_dim();
        if input.len() != batch * in_dim {
            return Err(Error::domain(format!(
                "input has {} values, expected {batch} x {in_dim}",
                input.len()
            )));
        }
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x: &[T] = if i == 0 { input } else { &outputs[i - 1] };
            let y = layer_forward(layer, x, batch);
            outputs.push(y);
        }
        Ok(ForwardCache {
            batch,
            owner: self.id,
            version: self.version,
            input: input.to_vec(),
            outputs,
        })
    }

    /// Sign of every ReLU pre-activation on `batch` rows of `input`, layer by
    /// layer. Two parameter settings with the same pattern lie on the same
    /// linear piece of the network.
    pub fn relu_pattern(&self, input: &[T], batch: usize) -> Result<Vec<bool>> {
        let cache = self.forward(input, batch)?;
        Ok(self
            .layers
            .iter()
            .zip(&cache.outputs)
            .filter(|(l, _)| l.activation == super::Activation::Relu)
            .flat_map(|(_, y)| y.iter().map(|v| *v > T::zero()))
            .collect())
    }

    /// Forward pass that keeps only the final output.
    pub fn infer(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        let in_dim = self.input_dim();
        if input.len() != batch * in_dim {
            return Err(Error::domain(format!(
                "input has {} values, expected {batch} x {in_dim}",
                input.len()
            )));
        }
        let mut cur = layer_forward(&self.layers[0], input, batch);
        for layer in &self.layers[1..] {
            cur = layer_forward(layer, &cur, batch);
        }
        Ok(cur)
    }

    /// Back-propagates `d_output` (gradient of the loss with respect to the
    /// network output) and returns parameter and input gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, d_output: &[T]) -> Result<(MlpGrads<T>, Vec<T>)> {
        if cache.owner != self.id || cache.version != self.version {
            return Err(Error::domain("forward cache is stale or belongs to another network"));
        }
        if cache.outputs.len() != self.layers.len()
            || cache.outputs.iter().zip(&self.layers).any(|(o, l)| o.len() != cache.batch * l.outputs())
        {
            return Err(Error::domain("forward cache does not match the network shape"));
        }
        let batch = cache.batch;
        if d_output.len() != batch * self.output_dim() {
            return Err(Error::domain("output gradient shape mismatch"));
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = d_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let y = &cache.outputs[i];
            let x: &[T] = if i == 0 { &cache.input } else { &cache.outputs[i - 1] };

            // dZ = dY * act'(Y)
            for (g, &yy) in upstream.iter_mut().zip(y.iter()) {
                *g = *g * layer.activation.derivative_from_output(yy);
            }
            let dz = upstream;

            let mut lp = LayerParams::zeros(n_in, n_out);
            gemm_tn(n_out, n_in, batch, &dz, x, T::zero(), &mut lp.weights);
            for row in dz.chunks_exact(n_out) {
                for (b, &d) in lp.bias.iter_mut().zip(row) {
                    *b = *b + d;
                }
            }
            grads.push(lp);

            let mut dx = vec![T::zero(); batch * n_in];
            gemm_nn(batch, n_in, n_out, &dz, &layer.params.weights, T::zero(), &mut dx);
            upstream = dx;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, upstream))
    }
}

fn layer_forward<T: Scalar>(layer: &DenseLayer<T>, x: &[T], batch: usize) -> Vec<T> {
    let n_out = layer.outputs();
    let mut y = Vec::with_capacity(batch * n_out);
    for _ in 0..batch {
        y.extend_from_slice(&layer.params.bias);
    }
    gemm_nt(batch, n_out, layer.inputs(), x, &layer.params.weights, T::one(), &mut y);
    let act = layer.activation;
    if act != super::Activation::None {
        y.iter_mut().for_each(|v| *v = act.apply(*v));
    }
    y
}
