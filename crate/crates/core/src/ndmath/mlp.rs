use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{ParamId, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Feed-forward network: tanh on hidden layers, identity on the output.
///
/// Layer `l` maps `layer_dims[l]` inputs to `layer_dims[l + 1]` outputs with
/// a weight of shape `in × out` (so a batch is `X · W + b`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Input(format!(
                "an MLP needs at least two positive widths, got {layer_dims:?}"
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let wd = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let bd = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            weights.push(Tensor::matrix(fan_in, fan_out, wd)?);
            biases.push(Tensor::new(vec![fan_out], bd)?);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Input("an MLP needs at least two widths".into()));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| Tensor::zeros(&[w[0], w[1]]))
            .collect();
        let biases = layer_dims[1..].iter().map(|&o| Tensor::zeros(&[o])).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    /// Builds a network from explicit per-layer tensors.
    pub fn from_parts(weights: Vec<Tensor>, biases: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Input("weights and biases must pair up".into()));
        }
        let mut layer_dims = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.shape().len() != 2 || w.rows() != layer_dims[l] {
                return Err(Error::LayerDimension {
                    layer: l,
                    expected: layer_dims[l],
                    found: w.rows(),
                });
            }
            if b.len() != w.cols() {
                return Err(Error::LayerDimension {
                    layer: l,
                    expected: w.cols(),
                    found: b.len(),
                });
            }
            layer_dims.push(w.cols());
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    /// Parameters in tape order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn n_param_tensors(&self) -> usize {
        2 * self.weights.len()
    }

    pub fn n_scalars(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::LayerDimension {
                layer: 0,
                expected: self.input_dim(),
                found: width,
            });
        }
        Ok(())
    }

    /// Records the forward pass on `tape`. Parameters are registered with ids
    /// `first_param, first_param + 1, ...` in [`Mlp::params`] order.
    pub fn forward(&self, tape: &mut Tape, input: Var, first_param: usize) -> Result<Var> {
        self.check_input(tape.value(input).cols())?;
        let last = self.n_layers() - 1;
        let mut h = input;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = tape.param(ParamId(first_param + 2 * l), w.clone());
            let bv = tape.param(ParamId(first_param + 2 * l + 1), b.clone());
            let a = tape.matmul(h, wv)?;
            let a = tape.add_row(a, bv)?;
            h = if l < last { tape.tanh(a) } else { a };
        }
        Ok(h)
    }

    /// Tape-free forward pass for inference.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input.cols())?;
        let last = self.n_layers() - 1;
        let mut h = input.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(w)?.add_row(b)?;
            if l < last {
                h = h.map(f64::tanh);
            }
        }
        Ok(h)
    }
}

/// Convenience wrapper: records `net` on `tape` starting from a constant input.
pub fn forward_mlp(net: &Mlp, input: &Tensor, tape: &mut Tape) -> Result<Var> {
    let x = tape.constant(input.clone());
    net.forward(tape, x, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.1, 9.0]).unwrap();
        let mut tape = Tape::new();
        let y = forward_mlp(&net, &x, &mut tape).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0; 4]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::from_parts(vec![Tensor::identity(3)], vec![Tensor::zeros(&[3])]).unwrap();
        let x = Tensor::matrix(1, 3, vec![0.25, -7.0, 3.5]).unwrap();
        let mut tape = Tape::new();
        let y = forward_mlp(&net, &x, &mut tape).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn two_layer_net_matches_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[3, 5, 2], &mut rng).unwrap();
        let v = [0.4, -1.1, 2.3];
        let x = Tensor::matrix(1, 3, v.to_vec()).unwrap();
        let mut tape = Tape::new();
        let y = forward_mlp(&net, &x, &mut tape).unwrap();

        let (w0, b0, w1, b1) = (&net.weights[0], &net.biases[0], &net.weights[1], &net.biases[1]);
        let hidden: Vec<f64> = (0..5)
            .map(|j| {
                let a: f64 = (0..3).map(|i| v[i] * w0.get(i, j)).sum::<f64>() + b0.data()[j];
                a.tanh()
            })
            .collect();
        for k in 0..2 {
            let out: f64 = (0..5).map(|j| hidden[j] * w1.get(j, k)).sum::<f64>() + b1.data()[k];
            assert!((tape.value(y).data()[k] - out).abs() < 1e-14);
        }
        assert_eq!(net.predict(&x).unwrap().data(), tape.value(y).data());
    }

    #[test]
    fn wrong_input_width_names_layer() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        let x = Tensor::zeros(&[1, 4]);
        let mut tape = Tape::new();
        let err = forward_mlp(&net, &x, &mut tape).unwrap_err();
        assert!(matches!(
            err,
            Error::LayerDimension {
                layer: 0,
                expected: 3,
                found: 4
            }
        ));
    }
}
