//! Dense Gaussian-process regression with a squared-exponential kernel and
//! per-dimension length-scales, factorized by Cholesky decomposition.

use crate::error::{CoreError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kernel and noise hyperparameters, stored in log space.
#[derive(Clone, Debug, PartialEq)]
pub struct GpHyper {
    pub log_ls: Vec<f64>,
    pub log_sf: f64,
    pub log_sn: f64,
}

impl GpHyper {
    pub fn default_for(dims: usize) -> Self {
        GpHyper {
            log_ls: vec![0.3f64.ln(); dims],
            log_sf: 0.5f64.ln(),
            log_sn: 0.1f64.ln(),
        }
    }

    fn signal_var(&self) -> f64 {
        (2.0 * self.log_sf).exp()
    }

    fn noise_var(&self) -> f64 {
        (2.0 * self.log_sn).exp()
    }

    /// k(a, b) = sf² · exp(−½ Σ_d ((a_d − b_d)/ls_d)²)
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut q = 0.0;
        for (d, (x, y)) in a.iter().zip(b).enumerate() {
            let ls = self.log_ls[d].exp();
            let r = (x - y) / ls;
            q += r * r;
        }
        self.signal_var() * (-0.5 * q).exp()
    }
}

/// In-place Cholesky factorization of a row-major symmetric matrix; on
/// success the lower triangle holds L with A = L·Lᵀ.
pub fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(CoreError::Numerics(format!(
                        "matrix not positive definite at pivot {i} (value {sum:.3e})"
                    )));
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    // Solves Lᵀ x = b given lower-triangular L.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

/// A fitted Gaussian process (zero prior mean).
#[derive(Clone, Debug)]
pub struct Gp {
    pub hyper: GpHyper,
    x: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    /// Jitter that had to be added to reach positive definiteness.
    pub jitter: f64,
}

impl Gp {
    /// Fit on `x` (rows in the unit cube) and targets `y`. If the kernel
    /// matrix is numerically singular, escalate a diagonal jitter from 1e−8
    /// by factors of 10 before giving up.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], hyper: GpHyper) -> Result<Gp> {
        let n = x.len();
        assert_eq!(n, y.len(), "inputs and targets must align");
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                base[i * n + j] = hyper.kernel(&x[i], &x[j]);
            }
            base[i * n + i] += hyper.noise_var();
        }
        let mut jitter = 0.0;
        loop {
            let mut k = base.clone();
            for i in 0..n {
                k[i * n + i] += jitter;
            }
            match cholesky(&mut k, n) {
                Ok(()) => {
                    let tmp = solve_lower(&k, n, y);
                    let alpha = solve_upper_t(&k, n, &tmp);
                    return Ok(Gp {
                        hyper,
                        x,
                        chol: k,
                        alpha,
                        jitter,
                    });
                }
                Err(e) => {
                    jitter = if jitter == 0.0 { 1e-8 } else { jitter * 10.0 };
                    if jitter > 1e-2 {
                        return Err(e);
                    }
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Posterior mean and (latent-function) variance at `q`.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let ks: Vec<f64> = self.x.iter().map(|xi| self.hyper.kernel(xi, q)).collect();
        let mean = ks.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();
        let v = solve_lower(&self.chol, n, &ks);
        let var = self.hyper.signal_var() - v.iter().map(|t| t * t).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Log marginal likelihood of the training targets under the fit.
    pub fn log_marginal(&self, y: &[f64]) -> f64 {
        let n = self.x.len();
        let fit: f64 = y.iter().zip(&self.alpha).map(|(yi, a)| yi * a).sum();
        let logdet: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Gradient-free hyperparameter refit: multi-start random search around the
/// current values (and a few global draws), maximizing the log marginal
/// likelihood. Returns the best hyperparameters found.
pub fn refit_hypers(x: &[Vec<f64>], y: &[f64], current: GpHyper, seed: u64) -> GpHyper {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = current.log_ls.len();
    let score = |h: &GpHyper| -> f64 {
        match Gp::fit(x.to_vec(), y, h.clone()) {
            Ok(gp) => gp.log_marginal(y),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut best = current.clone();
    let mut best_score = score(&best);
    for trial in 0..30 {
        let cand = if trial < 18 {
            // Local perturbation of the incumbent.
            GpHyper {
                log_ls: best
                    .log_ls
                    .iter()
                    .map(|l| (l + rng.gen_range(-0.4..0.4)).clamp(-3.0, 1.5))
                    .collect(),
                log_sf: (best.log_sf + rng.gen_range(-0.4..0.4)).clamp(-3.0, 1.0),
                log_sn: (best.log_sn + rng.gen_range(-0.4..0.4)).clamp(-5.0, 0.0),
            }
        } else {
            // Global draw.
            GpHyper {
                log_ls: (0..dims).map(|_| rng.gen_range(-2.5..1.0)).collect(),
                log_sf: rng.gen_range(-2.0..0.7),
                log_sn: rng.gen_range(-4.5..-0.7),
            }
        };
        let s = score(&cand);
        if s > best_score {
            best_score = s;
            best = cand;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn interpolates_noise_free_training_points() {
        let x = grid_1d(8);
        let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin()).collect();
        let hyper = GpHyper {
            log_ls: vec![0.3f64.ln()],
            log_sf: 0.0,
            log_sn: 1e-4f64.ln(),
        };
        let gp = Gp::fit(x.clone(), &y, hyper).unwrap();
        for (p, target) in x.iter().zip(&y) {
            let (m, v) = gp.predict(p);
            assert!((m - target).abs() < 1e-6, "mean {m} vs target {target}");
            assert!(v < 1e-3);
        }
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        let x = vec![vec![0.0], vec![0.01], vec![0.02]];
        let y = vec![1.0, 1.1, 0.9];
        let hyper = GpHyper {
            log_ls: vec![0.05f64.ln()],
            log_sf: 0.5f64.ln(),
            log_sn: 0.1f64.ln(),
        };
        let gp = Gp::fit(x, &y, hyper.clone()).unwrap();
        // 1.0 is 20 length-scales away from every training point.
        let (m, v) = gp.predict(&[1.0]);
        assert!(m.abs() < 1e-3, "mean {m} should revert to 0");
        assert!((v - hyper.signal_var()).abs() < 1e-3);
    }

    #[test]
    fn posterior_matches_dense_linear_algebra_oracle() {
        // Oracle: direct Gauss-Jordan inversion of K + σ²I, mean = k*ᵀ K⁻¹ y,
        // var = k** − k*ᵀ K⁻¹ k*.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 30;
        let dims = 3;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|p| (4.0 * p[0]).sin() + p[1] * p[1] - 0.5 * p[2])
            .collect();
        let hyper = GpHyper {
            log_ls: vec![0.4f64.ln(), 0.25f64.ln(), 0.6f64.ln()],
            log_sf: 0.8f64.ln(),
            log_sn: 0.05f64.ln(),
        };
        let gp = Gp::fit(x.clone(), &y, hyper.clone()).unwrap();
        assert_eq!(gp.jitter, 0.0);

        // Dense inverse.
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = hyper.kernel(&x[i], &x[j]);
            }
            a[i * n + i] += hyper.noise_var();
        }
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| {
                    a[p * n + col]
                        .abs()
                        .partial_cmp(&a[q * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r != col {
                    let factor = a[r * n + col];
                    for j in 0..n {
                        a[r * n + j] -= factor * a[col * n + j];
                        inv[r * n + j] -= factor * inv[col * n + j];
                    }
                }
            }
        }

        for _ in 0..10 {
            let q: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.0..1.0)).collect();
            let ks: Vec<f64> = x.iter().map(|xi| hyper.kernel(xi, &q)).collect();
            let kinv_y: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| inv[i * n + j] * y[j]).sum())
                .collect();
            let oracle_mean: f64 = ks.iter().zip(&kinv_y).map(|(k, v)| k * v).sum();
            let kinv_ks: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| inv[i * n + j] * ks[j]).sum())
                .collect();
            let oracle_var =
                hyper.signal_var() - ks.iter().zip(&kinv_ks).map(|(k, v)| k * v).sum::<f64>();
            let (m, v) = gp.predict(&q);
            assert!((m - oracle_mean).abs() < 1e-8, "mean {m} vs {oracle_mean}");
            assert!((v - oracle_var).abs() < 1e-8, "var {v} vs {oracle_var}");
        }
    }

    #[test]
    fn jitter_rescues_singular_kernel() {
        // Two identical inputs with zero noise make K exactly singular.
        let x = vec![vec![0.5], vec![0.5], vec![0.1]];
        let y = vec![1.0, 1.0, 0.0];
        let hyper = GpHyper {
            log_ls: vec![0.3f64.ln()],
            log_sf: 0.0,
            log_sn: f64::NEG_INFINITY, // zero noise
        };
        let gp = Gp::fit(x, &y, hyper).unwrap();
        assert!(gp.jitter > 0.0);
        let (m, _) = gp.predict(&[0.5]);
        assert!((m - 1.0).abs() < 1e-2);
    }

    #[test]
    fn refit_improves_marginal_likelihood_on_mismatched_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<Vec<f64>> = (0..25)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        // The function only depends on dim 0 and varies fast: the default
        // isotropic scales are badly wrong.
        let y: Vec<f64> = x.iter().map(|p| (12.0 * p[0]).sin()).collect();
        let start = GpHyper::default_for(2);
        let before = Gp::fit(x.clone(), &y, start.clone())
            .unwrap()
            .log_marginal(&y);
        let tuned = refit_hypers(&x, &y, start, 5);
        let after = Gp::fit(x.clone(), &y, tuned).unwrap().log_marginal(&y);
        assert!(
            after > before + 1.0,
            "refit did not improve LML: {before} -> {after}"
        );
    }
}
