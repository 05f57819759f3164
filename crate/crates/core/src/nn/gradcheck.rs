//! Central finite-difference verification of analytic gradients (64-bit).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::Mlp;
use crate::error::{Error, Result};

/// Something with a scalar loss over a set of named parameter tensors.
pub trait GradCheckable {
    fn tensor_count(&self) -> usize;
    fn tensor_label(&self, index: usize) -> String;
    fn tensor_mut(&mut self, index: usize) -> &mut [f64];
    fn loss(&self) -> Result<f64>;
    /// Analytic gradient of [`GradCheckable::loss`], one vector per tensor.
    fn gradients(&self) -> Result<Vec<Vec<f64>>>;
    /// State of every piecewise-linear switch (ReLU sign) at the current
    /// parameters. A probe whose two sides differ straddles a kink, where the
    /// central difference does not estimate the derivative; it is skipped.
    fn kink_pattern(&self) -> Result<Vec<bool>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Parameters per tensor to probe; larger tensors are sub-sampled.
    pub max_per_tensor: usize,
    pub seed: u64,
    /// Entries whose finite-difference magnitude is below this are skipped.
    pub min_fd: f64,
    pub tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_per_tensor: usize::MAX,
            seed: 0,
            min_fd: 1e-7,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub label: String,
    pub max_rel_error: f64,
    /// Number of entries that entered the error (non-negligible FD gradient).
    pub compared: usize,
    /// Entries skipped because the probe crossed a kink.
    pub kinks: usize,
    pub probed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn compared(&self) -> usize {
        self.tensors.iter().map(|t| t.compared).sum()
    }

    pub fn kinks(&self) -> usize {
        self.tensors.iter().map(|t| t.kinks).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

/// Compares analytic gradients against `(L(p+h) - L(p-h)) / 2h`.
pub fn grad_check<G: GradCheckable + ?Sized>(target: &mut G, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let analytic = target.gradients()?;
    if analytic.len() != target.tensor_count() {
        return Err(Error::domain("gradient count differs from tensor count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tensors = Vec::with_capacity(analytic.len());
    for (ti, grad) in analytic.iter().enumerate() {
        let len = target.tensor_mut(ti).len();
        if grad.len() != len {
            return Err(Error::domain(format!("gradient for tensor {ti} has the wrong length")));
        }
        let indices: Vec<usize> = if len <= opts.max_per_tensor {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, opts.max_per_tensor).into_vec();
            v.sort_unstable();
            v
        };
        let mut worst = 0.0f64;
        let mut compared = 0;
        let mut kinks = 0;
        for &i in &indices {
            let orig = target.tensor_mut(ti)[i];
            target.tensor_mut(ti)[i] = orig + opts.step;
            let lp = target.loss()?;
            let kp = target.kink_pattern()?;
            target.tensor_mut(ti)[i] = orig - opts.step;
            let lm = target.loss()?;
            let km = target.kink_pattern()?;
            target.tensor_mut(ti)[i] = orig;
            if kp != km {
                kinks += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * opts.step);
            if fd.abs() <= opts.min_fd {
                continue;
            }
            compared += 1;
            worst = worst.max((grad[i] - fd).abs() / fd.abs());
        }
        tensors.push(TensorCheck {
            label: target.tensor_label(ti),
            max_rel_error: worst,
            compared,
            kinks,
            probed: indices.len(),
        });
    }
    Ok(GradCheckReport {
        tensors,
        tolerance: opts.tolerance,
    })
}

/// An MLP on a fixed batch with a loss on its output.
///
/// The objective returns the loss value and its gradient with respect to the
/// network output.
pub struct MlpObjective<F> {
    pub net: Mlp<f64>,
    pub input: Vec<f64>,
    pub batch: usize,
    pub objective: F,
}

impl<F> GradCheckable for MlpObjective<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn tensor_count(&self) -> usize {
        self.net.layers().len() * 2
    }

    fn tensor_label(&self, index: usize) -> String {
        let kind = if index % 2 == 0 { "weights" } else { "bias" };
        format!("layer {} {kind}", index / 2)
    }

    fn tensor_mut(&mut self, index: usize) -> &mut [f64] {
        let p = &mut self.net.layers_mut()[index / 2].params;
        if index % 2 == 0 {
            &mut p.weights
        } else {
            &mut p.bias
        }
    }

    fn loss(&self) -> Result<f64> {
        let out = self.net.infer(&self.input, self.batch)?;
        Ok((self.objective)(&out).0)
    }

    fn kink_pattern(&self) -> Result<Vec<bool>> {
        self.net.relu_pattern(&self.input, self.batch)
    }

    fn gradients(&self) -> Result<Vec<Vec<f64>>> {
        let cache = self.net.forward(&self.input, self.batch)?;
        let (_, d_out) = (self.objective)(cache.output());
        let (grads, _) = self.net.backward(&cache, &d_out)?;
        Ok(grads
            .layers
            .into_iter()
            .flat_map(|l| [l.weights, l.bias])
            .collect())
    }
}

/// Half the squared distance to `target`, summed over the batch.
pub fn half_squared_error(target: Vec<f64>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    move |out: &[f64]| {
        let d: Vec<f64> = out.iter().zip(&target).map(|(o, t)| o - t).collect();
        (0.5 * d.iter().map(|x| x * x).sum::<f64>(), d)
    }
}
