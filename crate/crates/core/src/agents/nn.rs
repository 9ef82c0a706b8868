//! Minimal dense neural nets: tanh MLPs with exact backprop and Adam.
//!
//! Parameters live in one flat `Vec<f64>` (per layer: row-major weight matrix
//! then bias vector), which keeps checkpointing and optimizer state trivial
//! and makes training bit-reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network with tanh hidden activations and a linear head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths, input first (e.g. `[4, 256, 256, 2]`).
    pub sizes: Vec<usize>,
    /// Flat parameters: for each layer, weights (out x in, row-major) then biases.
    pub params: Vec<f64>,
}

/// Forward-pass bookkeeping needed for backprop: post-activation values of
/// every layer, input included.
#[derive(Clone, Debug)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has output")
    }
}

impl Mlp {
    /// Xavier-uniform initialization.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-bound..bound));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of layer `l`'s parameters in the flat vector.
    fn layer_offset(&self, l: usize) -> usize {
        let mut off = 0;
        for k in 0..l {
            off += self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1];
        }
        off
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let mut a = x.to_vec();
        for l in 0..self.layers() {
            a = self.layer_forward(l, &a, l + 1 < self.layers());
        }
        a
    }

    /// Forward pass that records activations for [`Mlp::backward`].
    pub fn forward_train(&self, x: &[f64]) -> Cache {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.layers() {
            let next = self.layer_forward(l, acts.last().unwrap(), l + 1 < self.layers());
            acts.push(next);
        }
        Cache { acts }
    }

    fn layer_forward(&self, l: usize, a: &[f64], hidden: bool) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        let mut out = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let row = &w[i * n_in..(i + 1) * n_in];
            let mut z = b[i];
            for (wj, aj) in row.iter().zip(a) {
                z += wj * aj;
            }
            out.push(if hidden { z.tanh() } else { z });
        }
        out
    }

    /// Backpropagate `dout` (gradient w.r.t. the network output) through the
    /// cached forward pass, accumulating parameter gradients into `grads`
    /// (same layout as `params`). Returns the gradient w.r.t. the input.
    pub fn backward(&self, cache: &Cache, dout: &[f64], grads: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.params.len());
        debug_assert_eq!(dout.len(), *self.sizes.last().unwrap());
        let mut delta = dout.to_vec();
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let a_in = &cache.acts[l];
            let a_out = &cache.acts[l + 1];
            // Hidden layers were tanh-activated; fold in the derivative.
            if l + 1 < self.layers() {
                for i in 0..n_out {
                    delta[i] *= 1.0 - a_out[i] * a_out[i];
                }
            }
            let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for i in 0..n_out {
                let di = delta[i];
                gb[i] += di;
                let row = &mut gw[i * n_in..(i + 1) * n_in];
                for (g, aj) in row.iter_mut().zip(a_in) {
                    *g += di * aj;
                }
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut dx = vec![0.0; n_in];
            for i in 0..n_out {
                let di = delta[i];
                let row = &w[i * n_in..(i + 1) * n_in];
                for (dxj, wj) in dx.iter_mut().zip(row) {
                    *dxj += di * wj;
                }
            }
            delta = dx;
        }
        delta
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One update step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Polyak-average `target <- rho * target + (1 - rho) * source`.
pub fn polyak(target: &mut [f64], source: &[f64], rho: f64) {
    debug_assert_eq!(target.len(), source.len());
    for (t, s) in target.iter_mut().zip(source) {
        *t = rho * *t + (1.0 - rho) * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn parameter_layout_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 5, 2], &mut rng);
        assert_eq!(net.n_params(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(
            Mlp::param_count(&[4, 256, 256, 2]),
            4 * 256 + 256 + 256 * 256 + 256 + 256 * 2 + 2
        );
    }

    #[test]
    fn forward_matches_manual_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::new(&[2, 2, 1], &mut rng);
        // W1 = [[1, 2], [3, 4]], b1 = [0.5, -0.5]; W2 = [[1, -1]], b2 = [0.25]
        net.params = vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5, 1.0, -1.0, 0.25];
        let x = [0.1, -0.2];
        let h1 = (1.0f64 * 0.1 + 2.0 * -0.2 + 0.5).tanh();
        let h2 = (3.0f64 * 0.1 + 4.0 * -0.2 - 0.5).tanh();
        let expect = h1 - h2 + 0.25;
        let y = net.forward(&x);
        assert!((y[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[3, 8, 8, 2], &mut rng);
        let x = [0.3, -0.7, 1.1];
        // Loss: L = sum_i c_i * y_i with fixed weights c.
        let c = [1.3, -0.8];
        let cache = net.forward_train(&x);
        let mut grads = vec![0.0; net.n_params()];
        let dx = net.backward(&cache, &c, &mut grads);

        let eps = 1e-6;
        let loss = |net: &Mlp, x: &[f64]| -> f64 {
            let y = net.forward(x);
            c[0] * y[0] + c[1] * y[1]
        };
        // Parameter gradients (spot-check a spread of indices).
        for &i in &[0usize, 7, 31, 40, 90, net.n_params() - 1] {
            let orig = net.params[i];
            net.params[i] = orig + eps;
            let up = loss(&net, &x);
            net.params[i] = orig - eps;
            let down = loss(&net, &x);
            net.params[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            assert!(
                (numeric - grads[i]).abs() <= 1e-7 * (1.0 + numeric.abs()),
                "param {i}: numeric {numeric} vs analytic {}",
                grads[i]
            );
        }
        // Input gradients.
        for i in 0..x.len() {
            let mut xp = x;
            xp[i] += eps;
            let up = loss(&net, &xp);
            xp[i] -= 2.0 * eps;
            let down = loss(&net, &xp);
            let numeric = (up - down) / (2.0 * eps);
            assert!(
                (numeric - dx[i]).abs() <= 1e-7 * (1.0 + numeric.abs()),
                "input {i}: numeric {numeric} vs analytic {}",
                dx[i]
            );
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // f(p) = sum (p_i - t_i)^2 reaches the target after enough steps.
        let target = [3.0, -1.5, 0.25];
        let mut params = vec![0.0; 3];
        let mut opt = Adam::new(3, 0.05);
        for _ in 0..2000 {
            let grads: Vec<f64> = params
                .iter()
                .zip(&target)
                .map(|(p, t)| 2.0 * (p - t))
                .collect();
            opt.step(&mut params, &grads);
        }
        for (p, t) in params.iter().zip(&target) {
            assert!((p - t).abs() < 1e-6, "param {p} vs target {t}");
        }
    }

    #[test]
    fn polyak_moves_toward_source() {
        let mut t = vec![0.0, 10.0];
        let s = vec![1.0, 0.0];
        polyak(&mut t, &s, 0.9);
        assert!((t[0] - 0.1).abs() < 1e-15);
        assert!((t[1] - 9.0).abs() < 1e-15);
    }

    #[test]
    fn training_init_is_seed_deterministic() {
        let a = Mlp::new(&[4, 16, 2], &mut ChaCha8Rng::seed_from_u64(9));
        let b = Mlp::new(&[4, 16, 2], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let c = Mlp::new(&[4, 16, 2], &mut ChaCha8Rng::seed_from_u64(10));
        assert_ne!(a, c);
    }
}
