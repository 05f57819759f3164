use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::None => x,
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::None => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// Weight matrix (`outputs x inputs`, row-major) and bias of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(self.bias.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// A fully connected layer `y = act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    inputs: usize,
    outputs: usize,
    pub params: LayerParams<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            params: LayerParams::zeros(inputs, outputs),
            activation,
        }
    }

    pub fn from_parts(inputs: usize, outputs: usize, weights: Vec<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::domain("layer dimensions must be non-zero"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::domain(format!(
                "layer {inputs}->{outputs} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(bias.iter()).all(|w| w.is_finite()) {
            return Err(Error::domain("layer parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            params: LayerParams { weights, bias },
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self, out: usize, inp: usize) -> T {
        self.params.weights[out * self.inputs + inp]
    }

    pub fn cast<U: Scalar>(&self) -> DenseLayer<U> {
        DenseLayer {
            inputs: self.inputs,
            outputs: self.outputs,
            params: LayerParams {
                weights: self.params.weights.iter().map(|w| U::from_f64(w.as_f64())).collect(),
                bias: self.params.bias.iter().map(|w| U::from_f64(w.as_f64())).collect(),
            },
            activation: self.activation,
        }
    }
}
