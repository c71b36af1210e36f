//! Fully connected network with tanh hidden layers and a linear output,
//! stored as one flat parameter vector.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to output.
    pub sizes: Vec<usize>,
    /// Per layer: weights `(out × in)` row-major, then biases.
    pub params: Vec<f64>,
}

/// Layer activations from a forward pass; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has at least the input")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Gaussian weights with variance `1/fan_in`, zero biases; the output
    /// layer is multiplied by `output_gain`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let std = gain / (fan_in as f64).sqrt();
            for w in &mut net.params[off..off + fan_in * fan_out] {
                let n: f64 = StandardNormal.sample(rng);
                *w = std * n;
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("network has layers")
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
                .collect();
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        MlpCache { acts }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).acts.pop().expect("output layer")
    }

    /// Accumulate `∂L/∂params` into `grad` given `∂L/∂output`; returns `∂L/∂input`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                let h = &cache.acts[l + 1];
                for (d, y) in delta.iter_mut().zip(h) {
                    *d *= 1.0 - y * y;
                }
            }
            let o = offsets[l];
            let input = &cache.acts[l];
            let mut d_in = vec![0.0; n_in];
            for (r, &d) in delta.iter().enumerate() {
                let row = o + r * n_in;
                for i in 0..n_in {
                    grad[row + i] += d * input[i];
                    d_in[i] += d * self.params[row + i];
                }
                grad[o + n_in * n_out + r] += d;
            }
            delta = d_in;
        }
        delta
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }
}
