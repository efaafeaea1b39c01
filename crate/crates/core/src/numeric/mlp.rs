//! Dense feed-forward networks with hand-written backpropagation.
//!
//! A layer computes `y = act(W x + b)` with `W` stored row-major as
//! `(out_dim, in_dim)`. Batches are matrices with one sample per row.

use serde::{Deserialize, Serialize};

use super::matrix::{gemm, MatRef, Matrix};
use super::rng::{hash_words, SeededRng};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(out_dim, in_dim)`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(format!(
                "bias has {} entries but weight has {} output rows",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Layer {
            weight,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.uniform_range(-limit, limit))
            .collect();
        Layer {
            weight: Matrix::from_vec(out_dim, in_dim, data).expect("sized above"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, input: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(input.rows(), self.out_dim());
        for r in 0..input.rows() {
            out.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(
            MatRef::row_major(input),
            MatRef::transposed(&self.weight),
            1.0,
            &mut out,
        );
        if self.activation != Activation::Identity {
            let act = self.activation;
            out.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        out
    }
}

/// An ordered stack of dimension-compatible layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("a network needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(format!(
                    "layer {k}: bias length {} != output dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if let Some(next) = layers.get(k + 1) {
                if next.in_dim() != layer.out_dim() {
                    return Err(Error::shape(format!(
                        "layer {} expects {} inputs but layer {k} produces {}",
                        k + 1,
                        next.in_dim(),
                        layer.out_dim()
                    )));
                }
            }
        }
        Ok(MlpParams { layers })
    }

    /// Glorot-initialised network with the given widths, e.g. `[64, 512, 8]`.
    ///
    /// `activations` has one entry per layer (`widths.len() - 1`).
    pub fn glorot(widths: &[usize], activations: &[Activation], rng: &mut SeededRng) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::argument(format!(
                "{} widths need {} activations, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                activations.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::argument("layer widths must be positive"));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| Layer::glorot(w[0], w[1], act, rng))
            .collect();
        MlpParams::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Parameters in storage order: per layer, the row-major weight then the bias.
    pub fn flat_params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| {
            l.weight
                .as_slice()
                .iter()
                .chain(l.bias.iter())
                .copied()
        })
    }

    /// Mutable access to the `i`-th parameter in storage order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let w = layer.weight.as_slice().len();
            if i < w {
                return &mut layer.weight.as_mut_slice()[i];
            }
            i -= w;
            if i < layer.bias.len() {
                return &mut layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// A 64-bit fingerprint of the exact parameter bits and architecture.
    pub fn fingerprint(&self) -> u64 {
        let arch = self.layers.iter().flat_map(|l| {
            [
                l.in_dim() as u64,
                l.out_dim() as u64,
                l.activation as u64,
            ]
        });
        hash_words(arch.chain(self.flat_params().map(f64::to_bits)))
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "layer 0 expects {} input columns, batch has {}",
                self.input_dim(),
                batch.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = self.layers[0].forward(batch);
        for layer in &self.layers[1..] {
            x = layer.forward(&x);
        }
        Ok(x)
    }

    /// Forward pass keeping every intermediate activation for backprop.
    pub fn forward_trace(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("nonempty"));
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    /// Backpropagates `output_grad` (dL/d output) through a recorded trace.
    pub fn backward_trace(&self, trace: &ForwardTrace, output_grad: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let out = trace.output();
        if output_grad.shape() != out.shape() {
            return Err(Error::shape(format!(
                "output gradient is {:?} but network output is {:?}",
                output_grad.shape(),
                out.shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[k];
            let output = &trace.activations[k + 1];
            // ReLU'(z) is taken as 0 at z = 0, so the mask is `output > 0`.
            if layer.activation == Activation::Relu {
                upstream
                    .as_mut_slice()
                    .iter_mut()
                    .zip(output.as_slice())
                    .for_each(|(g, &y)| {
                        if y <= 0.0 {
                            *g = 0.0;
                        }
                    });
            }
            let mut d_weight = Matrix::zeros(layer.out_dim(), layer.in_dim());
            gemm(
                MatRef::transposed(&upstream),
                MatRef::row_major(input),
                0.0,
                &mut d_weight,
            );
            let mut d_bias = vec![0.0; layer.out_dim()];
            for row in upstream.row_iter() {
                d_bias.iter_mut().zip(row).for_each(|(b, g)| *b += g);
            }
            let mut d_input = Matrix::zeros(input.rows(), layer.in_dim());
            gemm(
                MatRef::row_major(&upstream),
                MatRef::row_major(&layer.weight),
                0.0,
                &mut d_input,
            );
            grads.push(LayerGrad {
                weight: d_weight,
                bias: d_bias,
            });
            upstream = d_input;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, upstream))
    }

    /// Gradients of a scalar loss with respect to parameters and input.
    pub fn backward(&self, batch: &Matrix, output_grad: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let trace = self.forward_trace(batch)?;
        self.backward_trace(&trace, output_grad)
    }
}

/// Intermediate activations from [`MlpParams::forward_trace`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, `activations[k + 1]` the output of layer `k`.
    activations: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace always holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer tensors shaped like an [`MlpParams`]; used both for gradients
/// and for optimizer moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter()).copied())
    }

    pub fn matches(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(g, l)| {
                g.weight.shape() == l.weight.shape() && g.bias.len() == l.bias.len()
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weight: Matrix, bias: Vec<f64>, act: Activation) -> MlpParams {
        MlpParams::new(vec![Layer::new(weight, bias, act).unwrap()]).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single(Matrix::identity(2), vec![0.0, 0.0], Activation::Identity);
        let out = net.forward(&Matrix::from_rows(&[[3.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn relu_layer_clips_negatives() {
        let net = single(Matrix::identity(2), vec![0.0, 0.0], Activation::Relu);
        let out = net.forward(&Matrix::from_rows(&[[3.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn affine_layer_matches_hand_product() {
        // [[1,1],[0,1]] · [1,2] + [1,0] = [4, 2]
        let w = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let net = single(w, vec![1.0, 0.0], Activation::Identity);
        let out = net.forward(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[4.0, 2.0]);
    }

    #[test]
    fn wrong_input_width_names_layer() {
        let net = single(Matrix::identity(2), vec![0.0; 2], Activation::Identity);
        let err = net.forward(&Matrix::zeros(1, 3)).unwrap_err();
        assert!(matches!(&err, Error::Shape(m) if m.contains("layer 0")), "{err}");
    }

    #[test]
    fn incompatible_stack_rejected() {
        let a = Layer::new(Matrix::zeros(3, 2), vec![0.0; 3], Activation::Relu).unwrap();
        let b = Layer::new(Matrix::zeros(1, 4), vec![0.0], Activation::Identity).unwrap();
        let err = MlpParams::new(vec![a, b]).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = SeededRng::new(5);
        let net = MlpParams::glorot(&[3, 6, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, -0.3], [1.0, -1.0, 0.5]]).unwrap();
        let (g, dx) = net.backward(&x, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.flat().all(|v| v == 0.0));
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_input_grad_is_grad_times_weight() {
        let w = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]).unwrap();
        let net = single(w.clone(), vec![0.3, -0.2], Activation::Identity);
        let x = Matrix::from_rows(&[[1.0, 1.0, 1.0], [0.0, 2.0, -1.0]]).unwrap();
        let g = Matrix::from_rows(&[[1.0, -2.0], [0.5, 0.25]]).unwrap();
        let (_, dx) = net.backward(&x, &g).unwrap();
        assert_eq!(dx, g.matmul(&w).unwrap());
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let net = single(Matrix::identity(1), vec![0.0], Activation::Relu);
        let x = Matrix::from_rows(&[[0.0]]).unwrap();
        let (g, dx) = net.backward(&x, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(dx.as_slice(), &[0.0]);
        assert!(g.flat().all(|v| v == 0.0));
    }

    #[test]
    fn mismatched_output_grad_rejected() {
        let net = single(Matrix::identity(2), vec![0.0; 2], Activation::Identity);
        let x = Matrix::zeros(2, 2);
        assert!(matches!(net.backward(&x, &Matrix::zeros(1, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn glorot_is_seed_deterministic_and_bounded() {
        let acts = [Activation::Relu, Activation::Identity];
        let a = MlpParams::glorot(&[8, 16, 4], &acts, &mut SeededRng::new(11)).unwrap();
        let b = MlpParams::glorot(&[8, 16, 4], &acts, &mut SeededRng::new(11)).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(a.layers()[0].weight.as_slice().iter().all(|w| w.abs() <= limit));
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn param_mut_walks_storage_order() {
        let acts = [Activation::Relu, Activation::Identity];
        let mut net = MlpParams::glorot(&[2, 3, 1], &acts, &mut SeededRng::new(1)).unwrap();
        let n = net.num_params();
        for i in 0..n {
            *net.param_mut(i) = i as f64;
        }
        let flat: Vec<f64> = net.flat_params().collect();
        assert_eq!(flat, (0..n).map(|i| i as f64).collect::<Vec<_>>());
    }
}
