//! Bayesian-optimization search: a Gaussian process surrogate with an
//! upper-confidence-bound acquisition maximized by multi-start local search.

use crate::error::{CoreError, Result};
use crate::generation::gp::{refit_hypers, Gp, GpHyper};
use crate::generation::{evaluate_one, finish_run, GenerationRun, GenerationTask};
use crate::scenario::GeneratorId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exploration weight in the acquisition μ + κ·σ.
pub const KAPPA: f64 = 2.0;
/// Hyperparameters are refit every this many acquisitions.
pub const REFIT_EVERY: usize = 5;
const ACQ_STARTS: usize = 8;

/// Maximize `acq` over the unit cube with coordinate-descent hill climbing
/// from `start`, halving the step until convergence.
fn climb(acq: &dyn Fn(&[f64]) -> f64, start: &[f64]) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut best = acq(&x);
    let mut step = 0.25;
    while step > 1e-3 {
        let mut moved = false;
        for d in 0..x.len() {
            for sign in [1.0, -1.0] {
                let cand = (x[d] + sign * step).clamp(0.0, 1.0);
                if cand == x[d] {
                    continue;
                }
                let old = x[d];
                x[d] = cand;
                let v = acq(&x);
                if v > best {
                    best = v;
                    moved = true;
                } else {
                    x[d] = old;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, best)
}

/// Sequential GP-UCB over a black-box objective on the unit cube. Returns
/// every (point, value) pair in evaluation order.
pub fn optimize(
    dims: usize,
    budget: usize,
    seed: u64,
    f: &mut dyn FnMut(&[f64]) -> f64,
) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = (budget / 3).clamp(2, 8).min(budget);
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let mut ys: Vec<f64> = Vec::with_capacity(budget);
    for _ in 0..n0 {
        let x: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y = f(&x);
        xs.push(x);
        ys.push(y);
    }
    let mut hyper = GpHyper::default_for(dims);
    for t in n0..budget {
        if (t - n0) % REFIT_EVERY == 0 {
            hyper = refit_hypers(&xs, &ys, hyper, seed ^ (t as u64).wrapping_mul(0x9e37));
        }
        let gp = match Gp::fit(xs.clone(), &ys, hyper.clone()) {
            Ok(gp) => gp,
            Err(_) => {
                // Degenerate data (e.g. constant targets): fall back to a
                // random probe rather than aborting the search.
                let x: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.0..1.0)).collect();
                let y = f(&x);
                xs.push(x);
                ys.push(y);
                continue;
            }
        };
        let acq = |q: &[f64]| {
            let (m, v) = gp.predict(q);
            m + KAPPA * v.sqrt()
        };
        let best_idx = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut starts: Vec<Vec<f64>> = vec![xs[best_idx].clone()];
        for _ in 0..ACQ_STARTS {
            starts.push((0..dims).map(|_| rng.gen_range(0.0..1.0)).collect());
        }
        let mut cand = starts[0].clone();
        let mut cand_v = f64::NEG_INFINITY;
        for s in &starts {
            let (x, v) = climb(&acq, s);
            if v > cand_v {
                cand_v = v;
                cand = x;
            }
        }
        let y = f(&cand);
        xs.push(cand);
        ys.push(y);
    }
    xs.into_iter().zip(ys).collect()
}

/// Search the full parameter space with GP-UCB. Placements off the drivable
/// area score zero, which the surrogate model learns to avoid.
pub fn generate_as(task: &GenerationTask) -> Result<GenerationRun> {
    let dims = task.dims()?;
    if dims > 12 {
        return Err(CoreError::InvalidSpec(format!(
            "surrogate-model search supports at most 12 dimensions, template has {dims}"
        )));
    }
    let mut evals = Vec::with_capacity(task.budget);
    let mut failure: Option<CoreError> = None;
    {
        let mut objective = |x: &[f64]| -> f64 {
            let index = evals.len() as u32;
            match evaluate_one(task, GeneratorId::As, index, x) {
                Ok(e) => {
                    let j = e.objective;
                    evals.push(e);
                    j
                }
                Err(e) => {
                    if failure.is_none() {
                        failure = Some(e);
                    }
                    0.0
                }
            }
        };
        optimize(dims, task.budget, task.seed, &mut objective);
    }
    if let Some(e) = failure {
        return Err(e);
    }
    finish_run(task, GeneratorId::As, evals)
}
