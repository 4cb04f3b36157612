use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise activation. Every variant is 1-Lipschitz with `σ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Identity => x,
        }
    }
}

/// Bias-free fully connected network split after `split_index` layers.
///
/// Layer `l` maps `R^{cols}` to `R^{rows}`. The activation sits between
/// consecutive layers on the same side; the device output feeds the first
/// server layer directly and the last layer has no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnNetwork {
    pub layers: Vec<DMatrix<f64>>,
    pub activation: Activation,
    pub split_index: usize,
}

impl DnnNetwork {
    pub fn new(layers: Vec<DMatrix<f64>>, activation: Activation, split_index: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::field("layers", "network needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(Error::field(
                    format!("layers[{}]", l + 1),
                    format!(
                        "input width {} does not match previous output {}",
                        pair[1].ncols(),
                        pair[0].nrows()
                    ),
                ));
            }
        }
        if split_index < 1 || split_index > layers.len() {
            return Err(Error::field(
                "split_index",
                format!("must lie in 1..={}, got {split_index}", layers.len()),
            ));
        }
        if let Activation::LeakyRelu(a) = activation {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::field("activation", "leaky slope must lie in [0, 1]"));
            }
        }
        Ok(DnnNetwork {
            layers,
            activation,
            split_index,
        })
    }

    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`.
    ///
    /// `sizes` lists the widths from input to output.
    pub fn random(sizes: &[usize], activation: Activation, split_index: usize, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::field("layer_sizes", "need at least input and output widths"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = 1.0 / (fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(&mut rng))
            })
            .collect();
        DnnNetwork::new(layers, activation, split_index)
    }

    /// Builds the network from row-major per-layer weights.
    pub fn from_flat(sizes: &[usize], weights: &[f64], activation: Activation, split_index: usize) -> Result<Self> {
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1]).sum();
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: weights.len(),
            });
        }
        let mut off = 0;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (c, r) = (w[0], w[1]);
                let m = DMatrix::from_row_slice(r, c, &weights[off..off + r * c]);
                off += r * c;
                m
            })
            .collect();
        DnnNetwork::new(layers, activation, split_index)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|m| m.len()).sum()
    }

    /// Parameter counts `(device, server)`.
    pub fn side_param_counts(&self) -> (usize, usize) {
        let dev = self.layers[..self.split_index].iter().map(|m| m.len()).sum();
        (dev, self.param_count() - dev)
    }

    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|m| m.norm()).collect()
    }

    fn activate_after(&self, l: usize) -> bool {
        // l is a 1-based layer index
        l != self.split_index && l != self.layers.len()
    }

    /// Pre-activation output of every layer, `f(φ, Ω^(1:l))` for `l = 1..=L`.
    pub fn layer_outputs(&self, input: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut h = &self.layers[0] * input;
        for l in 1..self.layers.len() {
            let next = if self.activate_after(l) {
                let act = self.activation;
                &self.layers[l] * h.map(|x| act.apply(x))
            } else {
                &self.layers[l] * &h
            };
            outs.push(std::mem::replace(&mut h, next));
        }
        outs.push(h);
        Ok(outs)
    }

    pub fn forward(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.layer_outputs(input)?.pop().expect("non-empty"))
    }

    /// Output of the device-side sub-network (the uploaded embedding).
    pub fn device_output(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        let mut outs = self.layer_outputs(input)?;
        outs.truncate(self.split_index);
        Ok(outs.pop().expect("split >= 1"))
    }

    /// All weights, row-major per layer, concatenated.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in &self.layers {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.push(m[(r, c)]);
                }
            }
        }
        out
    }

    /// Same architecture with weights replaced from a row-major flat vector.
    pub fn with_flat_params(&self, flat: &[f64]) -> Result<Self> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|m| m.nrows()));
        DnnNetwork::from_flat(&sizes, flat, self.activation, self.split_index)
    }

    fn same_shape(&self, other: &DnnNetwork) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len(),
                got: other.layers.len(),
            });
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.shape() != b.shape() {
                return Err(Error::DimensionMismatch {
                    expected: a.len(),
                    got: b.len(),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn check_same_shape(&self, other: &DnnNetwork) -> Result<()> {
        self.same_shape(other)
    }
}

/// Uniform sample from the closed unit ball in `R^dim`.
pub fn unit_ball_input<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let radius = rng.random::<f64>().powf(1.0 / dim as f64);
    let n = dir.norm();
    if n == 0.0 {
        return DVector::zeros(dim);
    }
    dir * (radius / n)
}

/// Widths of the 8-layer fully connected auto-encoder (784-pixel input).
pub fn fcdnn8_sizes() -> Vec<usize> {
    vec![784, 64, 128, 256, 32, 256, 128, 64, 784]
}

/// Widths of the 16-layer fully connected auto-encoder.
pub fn fcdnn16_sizes() -> Vec<usize> {
    vec![
        784, 64, 128, 256, 512, 256, 128, 64, 32, 64, 128, 256, 512, 256, 128, 64, 784,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_maps_to_zero() {
        let net = DnnNetwork::random(&[5, 7, 3], Activation::Tanh, 1, 3).unwrap();
        let out = net.forward(&DVector::zeros(5)).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_net_is_matrix_product() {
        let net = DnnNetwork::random(&[4, 6, 2], Activation::Identity, 1, 9).unwrap();
        let x = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.05]);
        let direct = &net.layers[1] * (&net.layers[0] * &x);
        assert!((net.forward(&x).unwrap() - direct).norm() < 1e-14);
    }

    #[test]
    fn no_activation_across_split() {
        // two scalar layers with a negative pre-activation: ReLU would clip it
        let layers = vec![DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 2.0)];
        let x = DVector::from_element(1, 0.5);
        let split_at_1 = DnnNetwork::new(layers.clone(), Activation::Relu, 1).unwrap();
        assert_eq!(split_at_1.forward(&x).unwrap()[0], -1.0);
        let split_at_2 = DnnNetwork::new(layers, Activation::Relu, 2).unwrap();
        assert_eq!(split_at_2.forward(&x).unwrap()[0], 0.0);
    }

    #[test]
    fn shape_validation() {
        let bad = vec![DMatrix::zeros(3, 2), DMatrix::zeros(2, 4)];
        assert!(DnnNetwork::new(bad, Activation::Relu, 1).is_err());
        let ok = vec![DMatrix::zeros(3, 2)];
        assert!(DnnNetwork::new(ok.clone(), Activation::Relu, 0).is_err());
        assert!(DnnNetwork::new(ok.clone(), Activation::LeakyRelu(1.5), 1).is_err());
        let net = DnnNetwork::new(ok, Activation::Relu, 1).unwrap();
        assert!(matches!(
            net.forward(&DVector::zeros(5)),
            Err(Error::DimensionMismatch { expected: 2, got: 5 })
        ));
    }

    #[test]
    fn flat_roundtrip_is_row_major() {
        let net = DnnNetwork::from_flat(&[2, 2], &[1.0, 2.0, 3.0, 4.0], Activation::Relu, 1).unwrap();
        assert_eq!(net.layers[0][(0, 1)], 2.0);
        assert_eq!(net.layers[0][(1, 0)], 3.0);
        assert_eq!(net.flat_params(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unit_ball_inputs_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(unit_ball_input(50, &mut rng).norm() <= 1.0);
        }
    }

    #[test]
    fn fcdnn_shapes() {
        assert_eq!(fcdnn8_sizes().len() - 1, 8);
        assert_eq!(fcdnn16_sizes().len() - 1, 16);
    }
}
