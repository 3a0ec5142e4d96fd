//! Small dense layers used throughout the pipeline.

use crate::error::{Error, Result};
use crate::tensor::{linear_forward, seeded_init, softmax_row_in_place, DenseTensor, InitScheme, RngSeed};

/// Affine map `x W + b` with `W: din x dout`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: DenseTensor,
    pub bias: DenseTensor,
}

impl Linear {
    /// Uniform `±1/sqrt(din)` weights, zero bias.
    pub fn seeded(din: usize, dout: usize, seed: RngSeed) -> Self {
        let a = 1.0 / (din.max(1) as f64).sqrt();
        Self {
            weight: seeded_init(&[din, dout], seed, InitScheme::Uniform(a)).expect("valid shape"),
            bias: DenseTensor::zeros([dout]),
        }
    }

    pub fn seeded_scaled(din: usize, dout: usize, seed: RngSeed, gain: f64) -> Self {
        let mut l = Self::seeded(din, dout, seed);
        l.weight = l.weight.scaled(gain);
        l
    }

    pub fn zeros(din: usize, dout: usize) -> Self {
        Self {
            weight: DenseTensor::zeros([din, dout]),
            bias: DenseTensor::zeros([dout]),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: DenseTensor::identity(n),
            bias: DenseTensor::zeros([n]),
        }
    }

    pub fn din(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn dout(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Single-row application into a caller-provided buffer.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let dout = self.dout();
        debug_assert_eq!(x.len(), self.din());
        debug_assert_eq!(out.len(), dout);
        out.copy_from_slice(self.bias.data());
        let w = self.weight.data();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &wv) in out.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                *o += xi * wv;
            }
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dout()];
        self.apply(x, &mut out);
        out
    }

    pub fn forward(&self, x: &DenseTensor) -> Result<DenseTensor> {
        linear_forward(x, &self.weight, &self.bias)
    }

    /// `W^T g`, the input gradient of a single row.
    pub fn backprop_input(&self, g: &[f64], dx: &mut [f64]) {
        let dout = self.dout();
        let w = self.weight.data();
        for (i, d) in dx.iter_mut().enumerate() {
            *d += w[i * dout..(i + 1) * dout]
                .iter()
                .zip(g)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }

    /// Accumulates `x ⊗ g` into this layer viewed as a gradient buffer.
    pub fn accumulate_grad(&mut self, x: &[f64], g: &[f64]) {
        let dout = self.dout();
        let w = self.weight.data_mut();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (d, &gv) in w[i * dout..(i + 1) * dout].iter_mut().zip(g) {
                *d += xi * gv;
            }
        }
        for (b, &gv) in self.bias.data_mut().iter_mut().zip(g) {
            *b += gv;
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.din(), self.dout())
    }

    pub fn tensors_mut(&mut self) -> [&mut DenseTensor; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn tensors(&self) -> [&DenseTensor; 2] {
        [&self.weight, &self.bias]
    }
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        *v = v.max(0.0);
    }
}

/// Two-layer perceptron with a ReLU hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn seeded(din: usize, dhidden: usize, dout: usize, seed: RngSeed) -> Self {
        Self {
            hidden: Linear::seeded(din, dhidden, seed.derive("hidden")),
            output: Linear::seeded(dhidden, dout, seed.derive("output")),
        }
    }

    /// Random hidden layer, zero output layer: the MLP starts as the zero map.
    pub fn seeded_zero_output(din: usize, dhidden: usize, dout: usize, seed: RngSeed) -> Self {
        Self {
            hidden: Linear::seeded(din, dhidden, seed.derive("hidden")),
            output: Linear::zeros(dhidden, dout),
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut h = self.hidden.apply_vec(x);
        relu_in_place(&mut h);
        self.output.apply(&h, out);
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output.dout()];
        self.apply(x, &mut out);
        out
    }
}

/// Dense multi-head attention from a set of query rows onto key/value rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl MultiHeadAttention {
    pub fn seeded(channels: usize, heads: usize, seed: RngSeed) -> Result<Self> {
        if heads == 0 || !channels.is_multiple_of(heads) {
            return Err(Error::invalid(format!(
                "{channels} channels not divisible into {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            query: Linear::seeded(channels, channels, seed.derive("q")),
            key: Linear::seeded(channels, channels, seed.derive("k")),
            value: Linear::seeded(channels, channels, seed.derive("v")),
            output: Linear::seeded(channels, channels, seed.derive("o")),
        })
    }

    /// `queries: n x C`, `context: m x C`. With an empty context the output
    /// is the projection of a zero vector.
    pub fn forward(&self, queries: &[Vec<f64>], context: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let c = self.query.dout();
        let dh = c / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let keys: Vec<Vec<f64>> = context.iter().map(|x| self.key.apply_vec(x)).collect();
        let values: Vec<Vec<f64>> = context.iter().map(|x| self.value.apply_vec(x)).collect();
        queries
            .iter()
            .map(|x| {
                let q = self.query.apply_vec(x);
                let mut concat = vec![0.0; c];
                if !context.is_empty() {
                    for h in 0..self.heads {
                        let r = h * dh..(h + 1) * dh;
                        let mut w: Vec<f64> = keys
                            .iter()
                            .map(|k| q[r.clone()].iter().zip(&k[r.clone()]).map(|(a, b)| a * b).sum())
                            .collect();
                        softmax_row_in_place(&mut w, scale);
                        for (wt, v) in w.iter().zip(&values) {
                            for (o, vv) in concat[r.clone()].iter_mut().zip(&v[r.clone()]) {
                                *o += wt * vv;
                            }
                        }
                    }
                }
                self.output.apply_vec(&concat)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_apply_matches_tensor_forward() {
        let l = Linear::seeded(5, 3, RngSeed(3));
        let x = DenseTensor::new([2, 5], (0..10).map(|v| v as f64 * 0.1 - 0.4).collect()).unwrap();
        let full = l.forward(&x).unwrap();
        for r in 0..2 {
            let row = l.apply_vec(x.row(r));
            for (a, b) in row.iter().zip(full.row(r)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_output_mlp_is_zero_map() {
        let m = Mlp::seeded_zero_output(4, 8, 4, RngSeed(1));
        assert_eq!(m.apply_vec(&[1.0, -2.0, 3.0, 0.5]), vec![0.0; 4]);
    }

    #[test]
    fn single_key_attention_returns_projected_value() {
        let mha = MultiHeadAttention::seeded(4, 2, RngSeed(8)).unwrap();
        let ctx = vec![vec![0.3, -0.2, 0.5, 1.0]];
        let out = mha.forward(&[vec![1.0, 2.0, 3.0, 4.0]], &ctx);
        let expect = mha.output.apply_vec(&mha.value.apply_vec(&ctx[0]));
        for (a, b) in out[0].iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
