//! Per-cell MLP feature extractor.
//!
//! Each spatial cell's `C_in` vector goes through `linear -> ReLU -> linear
//! -> ReLU`, so an `R x C_in` raw item becomes an `R x C` feature map. Cells
//! never mix.

use rand::Rng as _;

use crate::error::{DaraError, Result};
use crate::numerics::{Matrix, Tape, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`
    pub weight: Matrix,
    /// `1 x fan_out`
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    pub layers: Vec<Layer>,
}

/// Backbone parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct BackboneVars {
    pub layers: Vec<(Var, Var)>,
}

impl BackboneParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(in_channels: usize, hidden: usize, out_channels: usize, rng: &mut Rng) -> Self {
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weight: Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound)),
                bias: Matrix::zeros(1, fan_out),
            }
        };
        BackboneParams {
            layers: vec![layer(in_channels, hidden), layer(hidden, out_channels)],
        }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let params = BackboneParams { layers };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
                return Err(DaraError::shape("backbone_bias", l.weight.shape(), l.bias.shape()));
            }
            if i > 0 {
                let prev = &self.layers[i - 1].weight;
                if prev.cols() != l.weight.rows() {
                    return Err(DaraError::shape("backbone_chain", prev.shape(), l.weight.shape()));
                }
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(DaraError::NonFinite("backbone parameters"));
            }
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    /// Registers every weight and bias; `trainable = false` freezes them.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> BackboneVars {
        let mut leaf = |m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        BackboneVars {
            layers: self
                .layers
                .iter()
                .map(|l| (leaf(&l.weight), leaf(&l.bias)))
                .collect(),
        }
    }

    /// Plain SGD: `p -= lr * grad` for every registered tensor.
    pub fn sgd_step(&mut self, vars: &BackboneVars, grads: &crate::numerics::Gradients, lr: f64) {
        for (layer, (w, b)) in self.layers.iter_mut().zip(&vars.layers) {
            if let Some(g) = grads.get(*w) {
                layer.weight.axpy(-lr, g);
            }
            if let Some(g) = grads.get(*b) {
                layer.bias.axpy(-lr, g);
            }
        }
    }

    /// Features of a single item, evaluated off-tape.
    pub fn apply(&self, item: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let x = tape.constant(item.clone());
        let out = forward(&mut tape, &vars, x)?;
        Ok(tape.value(out).clone())
    }

    pub fn apply_all(&self, items: &[Matrix]) -> Result<Vec<Matrix>> {
        items.iter().map(|m| self.apply(m)).collect()
    }
}

/// Runs the stack on `input` (any number of stacked cells x `C_in`).
pub fn forward(tape: &mut Tape, vars: &BackboneVars, input: Var) -> Result<Var> {
    let mut h = input;
    for &(w, b) in &vars.layers {
        let z = tape.matmul(h, w)?;
        let z = tape.add_row(z, b)?;
        h = tape.relu(z);
    }
    Ok(h)
}

/// Features for several `R x C_in` items, computed in one stacked pass and
/// split back into `R x C` nodes.
pub fn forward_items(tape: &mut Tape, vars: &BackboneVars, items: &[&Matrix]) -> Result<Vec<Var>> {
    let r = items.first().map_or(0, |m| m.rows());
    let stacked = Matrix::vstack(items)?;
    let x = tape.constant(stacked);
    let out = forward(tape, vars, x)?;
    (0..items.len())
        .map(|i| tape.slice_rows(out, i * r, r))
        .collect()
}
