//! Fully connected network with tanh hidden layers and a linear output,
//! parameters stored in one flat vector.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to output.
    pub sizes: Vec<usize>,
    /// Per layer: weights (row-major, `out x in`) then biases.
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// Input of every layer plus the final output.
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count_for(sizes)],
        })
    }

    /// Gaussian weights with std `gain / sqrt(fan_in)` (`output_gain` on the
    /// last layer), zero biases.
    pub fn init(sizes: &[usize], gain: f64, output_gain: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut mlp = Self::zeros(sizes)?;
        let layers = sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let g = if l + 1 == layers { output_gain } else { gain };
            let std = g / (fan_in as f64).sqrt();
            if std > 0.0 {
                let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
                for p in &mut mlp.params[offset..offset + fan_in * fan_out] {
                    *p = normal.sample(rng);
                }
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(mlp)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap_or(&0)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = MlpCache::default();
        self.forward_cached(input, &mut cache);
        cache.activations.pop().unwrap_or_default()
    }

    pub fn forward_cached(&self, input: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(input.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        cache.activations.clear();
        cache.activations.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &cache.activations[l];
            let mut y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            cache.activations.push(y);
            offset += n_in * n_out + n_out;
        }
    }

    /// Adds `d loss / d params` to `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &MlpCache, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut o = 0;
        for w in self.sizes.windows(2) {
            offsets.push(o);
            o += w[0] * w[1] + w[1];
        }
        let mut delta = d_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // tanh' = 1 - y^2 on this layer's output
                let y = &cache.activations[l + 1];
                for (d, y) in delta.iter_mut().zip(y) {
                    *d *= 1.0 - y * y;
                }
            }
            let x = &cache.activations[l];
            let off = offsets[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (oi, d) in delta.iter().enumerate() {
                gb[oi] += d;
                let row = &mut gw[oi * n_in..(oi + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (oi, d) in delta.iter().enumerate() {
                    let row = &weights[oi * n_in..(oi + 1) * n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::init(&[3, 5, 4, 2], 1.0, 1.0, &mut rng).unwrap();
        let x = [0.3, -0.7, 1.1];
        let w = [0.4, -1.3];
        let loss = |m: &Mlp| m.forward(&x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let mut cache = MlpCache::default();
        mlp.forward_cached(&x, &mut cache);
        let mut grad = vec![0.0; mlp.param_count()];
        mlp.backward(&cache, &w, &mut grad);
        let h = 1e-6;
        for i in 0..mlp.param_count() {
            let mut p = mlp.clone();
            p.params[i] += h;
            let up = loss(&p);
            p.params[i] -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-7 * (1.0 + fd.abs()), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn sizes_checked() {
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 0, 1]).is_err());
        assert_eq!(Mlp::zeros(&[2, 3, 1]).unwrap().param_count(), 2 * 3 + 3 + 3 + 1);
    }
}
