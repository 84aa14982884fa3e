//! Minimal dense-network machinery: layers, forward passes that record a
//! tape, reverse-mode gradients, Adam, and a finite-difference checker.
//!
//! Everything operates on flat `Vec<f64>` buffers in fixed index order so
//! that repeated runs are bit-identical. Activation derivatives are computed
//! from the activation *outputs* (cheap for relu/tanh/linear), which is why
//! the tape stores post-activation values only.

mod adam;
mod gradcheck;

pub use adam::AdamState;
pub use gradcheck::{finite_difference_check, GradCheckReport};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("layer {layer}: input length {actual}, expected {expected}")]
    InputLength {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer} expects inputs of length {expected} but the previous layer produces {actual}")]
    LayerChain {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    #[error("output gradient length {actual}, expected {expected}")]
    OutputGradLength { expected: usize, actual: usize },
    #[error("tape does not match network: {0}")]
    StaleTape(String),
    #[error("non-finite gradient at flat parameter index {index}")]
    NonFiniteGradient { index: usize },
    #[error("gradient length {actual} does not match parameter length {expected}")]
    GradientLength { expected: usize, actual: usize },
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("flat parameter buffer has {actual} values, network needs {expected}")]
    FlatLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y = apply(x)`.
    /// relu uses the convention `d/dx relu(0) = 0`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Fully connected layer; `weights` is row-major `[out_dim][in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Zero-initialized layer of the given shape.
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in_dim + out_dim))`, zero bias.
    /// Weights are drawn in row-major index order.
    pub fn glorot<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dims must be positive");
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Checks internal buffer lengths against the declared shape.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(NnError::StaleTape(format!(
                "layer buffers ({} weights, {} bias) do not match shape {}x{}",
                self.weights.len(),
                self.bias.len(),
                self.out_dim,
                self.in_dim
            )));
        }
        Ok(())
    }

    /// `y[o] = act(bias[o] + sum_i weights[o][i] * x[i])`, summed in index order.
    pub fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        out.reserve(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x.iter()) {
                acc += w * xi;
            }
            out.push(self.activation.apply(acc));
        }
    }
}

/// Post-activation values recorded by [`network_forward`]; consumed by
/// [`network_backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    pub input: Vec<f64>,
    pub activations: Vec<Vec<f64>>,
}

/// Per-layer gradients plus the gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct NetworkGradients {
    pub layers: Vec<LayerGradients>,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn check_chain(layers: &[DenseLayer]) -> Result<(), NnError> {
    if layers.is_empty() {
        return Err(NnError::EmptyNetwork);
    }
    for (l, pair) in layers.windows(2).enumerate() {
        if pair[1].in_dim != pair[0].out_dim {
            return Err(NnError::LayerChain {
                layer: l + 1,
                expected: pair[1].in_dim,
                actual: pair[0].out_dim,
            });
        }
    }
    Ok(())
}

/// Runs `x` through the layers, returning the output and the tape needed for
/// a later backward pass.
pub fn network_forward(layers: &[DenseLayer], x: &[f64]) -> Result<(Vec<f64>, Tape), NnError> {
    check_chain(layers)?;
    if x.len() != layers[0].in_dim {
        return Err(NnError::InputLength {
            layer: 0,
            expected: layers[0].in_dim,
            actual: x.len(),
        });
    }
    let mut activations = Vec::with_capacity(layers.len());
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    for layer in layers {
        layer.forward(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        activations.push(cur.clone());
    }
    Ok((
        cur,
        Tape {
            input: x.to_vec(),
            activations,
        },
    ))
}

/// Reverse-mode gradients of a scalar loss given `d_out`, the loss gradient
/// with respect to the network's post-activation output.
///
/// The tape must come from a [`network_forward`] call on these exact layers;
/// mismatched shapes are rejected rather than silently misattributed.
pub fn network_backward(
    layers: &[DenseLayer],
    tape: &Tape,
    d_out: &[f64],
) -> Result<NetworkGradients, NnError> {
    check_chain(layers)?;
    if tape.activations.len() != layers.len() {
        return Err(NnError::StaleTape(format!(
            "tape has {} layer records, network has {}",
            tape.activations.len(),
            layers.len()
        )));
    }
    if tape.input.len() != layers[0].in_dim {
        return Err(NnError::StaleTape(format!(
            "tape input length {} does not match first layer input {}",
            tape.input.len(),
            layers[0].in_dim
        )));
    }
    for (l, (layer, act)) in layers.iter().zip(&tape.activations).enumerate() {
        if act.len() != layer.out_dim {
            return Err(NnError::StaleTape(format!(
                "tape layer {l} has {} outputs, layer produces {}",
                act.len(),
                layer.out_dim
            )));
        }
    }
    let last = layers.len() - 1;
    if d_out.len() != layers[last].out_dim {
        return Err(NnError::OutputGradLength {
            expected: layers[last].out_dim,
            actual: d_out.len(),
        });
    }

    let mut grads: Vec<LayerGradients> = layers
        .iter()
        .map(|l| LayerGradients {
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.out_dim],
        })
        .collect();

    let mut upstream = d_out.to_vec();
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let y = &tape.activations[l];
        let x_in: &[f64] = if l == 0 {
            &tape.input
        } else {
            &tape.activations[l - 1]
        };
        let g = &mut grads[l];
        let mut d_x = vec![0.0; layer.in_dim];
        for o in 0..layer.out_dim {
            let delta = upstream[o] * layer.activation.derivative_from_output(y[o]);
            g.bias[o] = delta;
            let w_row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            let gw_row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for i in 0..layer.in_dim {
                gw_row[i] = delta * x_in[i];
                d_x[i] += w_row[i] * delta;
            }
        }
        upstream = d_x;
    }
    Ok(NetworkGradients {
        layers: grads,
        input: upstream,
    })
}

/// Total parameter count of a layer stack.
pub fn layers_param_count(layers: &[DenseLayer]) -> usize {
    layers.iter().map(DenseLayer::param_count).sum()
}

/// Appends each layer's weights then bias to `out`, in layer order.
pub fn flatten_layers(layers: &[DenseLayer], out: &mut Vec<f64>) {
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.bias);
    }
}

/// Inverse of [`flatten_layers`]; `offset` advances past the consumed values.
pub fn unflatten_layers(
    layers: &mut [DenseLayer],
    flat: &[f64],
    offset: &mut usize,
) -> Result<(), NnError> {
    for l in layers.iter_mut() {
        let need = l.param_count();
        if *offset + need > flat.len() {
            return Err(NnError::FlatLength {
                expected: *offset + need,
                actual: flat.len(),
            });
        }
        let (w_end, b_end) = (*offset + l.weights.len(), *offset + need);
        l.weights.copy_from_slice(&flat[*offset..w_end]);
        l.bias.copy_from_slice(&flat[w_end..b_end]);
        *offset = b_end;
    }
    Ok(())
}

/// Adds network gradients into a flat buffer laid out like [`flatten_layers`].
pub fn accumulate_gradients(dst: &mut [f64], grads: &NetworkGradients) {
    let mut off = 0;
    for lg in &grads.layers {
        for (d, g) in dst[off..off + lg.weights.len()].iter_mut().zip(&lg.weights) {
            *d += g;
        }
        off += lg.weights.len();
        for (d, g) in dst[off..off + lg.bias.len()].iter_mut().zip(&lg.bias) {
            *d += g;
        }
        off += lg.bias.len();
    }
}
