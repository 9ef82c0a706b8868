//! Stochastic policy gradient trainer: clipped-ratio surrogate objective,
//! generalized advantage estimation, and an approximate-KL early stop.

use crate::agents::env::DrivingEnv;
use crate::agents::nn::{Adam, Mlp};
use crate::agents::policy::{normalize_obs, Policy, PolicyKind};
use crate::agents::train::{IterStats, TrainReport};
use crate::agents::ObsSpace;
use crate::error::Result;
use crate::scenario::ScenarioInstance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct StochasticPgConfig {
    pub space: ObsSpace,
    pub hidden: Vec<usize>,
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_ratio: f64,
    pub target_kl: f64,
    pub policy_lr: f64,
    pub value_lr: f64,
    /// Maximum gradient epochs per iteration; the KL stop usually ends the
    /// policy phase well before this.
    pub policy_epochs: usize,
    pub value_epochs: usize,
    /// Behavior-cloning warm start: episodes of the rule-based lane follower
    /// to imitate before the first gradient iteration (0 = from scratch).
    pub warmstart_episodes: usize,
    /// Minibatch regression steps spent on the warm start.
    pub warmstart_updates: usize,
    pub seed: u64,
}

impl Default for StochasticPgConfig {
    fn default() -> Self {
        StochasticPgConfig {
            space: ObsSpace::FourD,
            hidden: vec![256, 256],
            iterations: 40,
            steps_per_iteration: 1000,
            gamma: 0.99,
            lambda: 0.95,
            clip_ratio: 0.2,
            target_kl: 0.01,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            policy_epochs: 80,
            value_epochs: 20,
            warmstart_episodes: 0,
            warmstart_updates: 1200,
            seed: 0,
        }
    }
}

struct Sample {
    x: Vec<f64>,
    action: [f64; 2],
    logp: f64,
    reward: f64,
    value: f64,
    adv: f64,
    ret: f64,
}

/// Train a stochastic policy on episodes drawn from `sampler`.
pub fn train(
    cfg: &StochasticPgConfig,
    sampler: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<ScenarioInstance>,
) -> Result<TrainReport> {
    let dim = cfg.space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut pi_sizes = vec![dim];
    pi_sizes.extend(&cfg.hidden);
    pi_sizes.push(2);
    let mut v_sizes = vec![dim];
    v_sizes.extend(&cfg.hidden);
    v_sizes.push(1);

    let mut policy = Policy::new(
        PolicyKind::StochasticPg,
        cfg.space,
        Mlp::new(&pi_sizes, &mut rng),
        cfg.seed,
    );
    let mut value_net = Mlp::new(&v_sizes, &mut rng);
    if cfg.warmstart_episodes > 0 {
        super::clone_rule_based_driver(
            &mut policy.net,
            cfg.space,
            cfg.warmstart_episodes,
            cfg.warmstart_updates,
            sampler,
            &mut rng,
        )?;
        // Sampling at the default spread would bury the cloned behavior in
        // exploration noise; start tighter and let the gradient re-widen it.
        policy.log_std = [-1.2; 2];
    }
    let mut pi_opt = Adam::new(policy.net.n_params(), cfg.policy_lr);
    let mut std_opt = Adam::new(2, cfg.policy_lr);
    let mut v_opt = Adam::new(value_net.n_params(), cfg.value_lr);

    let mut stats = Vec::with_capacity(cfg.iterations);

    for iteration in 0..cfg.iterations {
        // ------------------------------------------------------------------
        // collect experience
        // ------------------------------------------------------------------
        let mut buf: Vec<Sample> = Vec::with_capacity(cfg.steps_per_iteration);
        let mut segment_starts: Vec<(usize, f64)> = Vec::new(); // (start, bootstrap)
        let mut ep_returns: Vec<f64> = Vec::new();
        let mut ep_lens: Vec<f64> = Vec::new();

        while buf.len() < cfg.steps_per_iteration {
            let instance = sampler(&mut rng)?;
            let mut env = DrivingEnv::new(cfg.space, instance);
            let mut obs = env.obs()?;
            let start = buf.len();
            let mut ep_ret = 0.0;
            loop {
                let x = normalize_obs(cfg.space, &obs);
                let value = value_net.forward(&x)[0];
                let (action, logp) = policy.sample_raw(&obs, &mut rng)?;
                let clipped = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
                let step = env.step(clipped)?;
                ep_ret += step.reward;
                buf.push(Sample {
                    x,
                    action,
                    logp,
                    reward: step.reward,
                    value,
                    adv: 0.0,
                    ret: 0.0,
                });
                if step.done {
                    segment_starts.push((start, 0.0));
                    ep_returns.push(ep_ret);
                    ep_lens.push((buf.len() - start) as f64);
                    break;
                }
                obs = step.obs;
                if buf.len() >= cfg.steps_per_iteration {
                    // Truncated by the buffer: bootstrap from the value net.
                    let x_last = normalize_obs(cfg.space, &obs);
                    segment_starts.push((start, value_net.forward(&x_last)[0]));
                    break;
                }
            }
        }

        // ------------------------------------------------------------------
        // advantages (GAE) per episode segment
        // ------------------------------------------------------------------
        let mut seg_bounds = Vec::with_capacity(segment_starts.len());
        for (k, (start, bootstrap)) in segment_starts.iter().enumerate() {
            let end = segment_starts
                .get(k + 1)
                .map(|(s, _)| *s)
                .unwrap_or(buf.len());
            seg_bounds.push((*start, end, *bootstrap));
        }
        for (start, end, bootstrap) in seg_bounds {
            let mut next_value = bootstrap;
            let mut next_adv = 0.0;
            for t in (start..end).rev() {
                let delta = buf[t].reward + cfg.gamma * next_value - buf[t].value;
                let adv = delta + cfg.gamma * cfg.lambda * next_adv;
                buf[t].adv = adv;
                buf[t].ret = adv + buf[t].value;
                next_value = buf[t].value;
                next_adv = adv;
            }
        }
        let n = buf.len() as f64;
        let mean_adv = buf.iter().map(|s| s.adv).sum::<f64>() / n;
        let var_adv = buf.iter().map(|s| (s.adv - mean_adv).powi(2)).sum::<f64>() / n;
        let std_adv = var_adv.sqrt() + 1e-8;
        for s in &mut buf {
            s.adv = (s.adv - mean_adv) / std_adv;
        }

        // ------------------------------------------------------------------
        // policy updates with KL stop
        // ------------------------------------------------------------------
        let mut kl = 0.0;
        let mut epochs_used = 0;
        for _epoch in 0..cfg.policy_epochs {
            let mut grads = vec![0.0; policy.net.n_params()];
            let mut std_grads = [0.0; 2];
            let mut kl_sum = 0.0;
            for s in &buf {
                let cache = policy.net.forward_train(&s.x);
                let out = cache.output();
                let mean = [out[0].tanh(), out[1].tanh()];
                let logp_new = policy.log_prob_of(mean, s.action);
                let ratio = (logp_new - s.logp).exp();
                kl_sum += s.logp - logp_new;
                let clipped_out = if s.adv >= 0.0 {
                    ratio > 1.0 + cfg.clip_ratio
                } else {
                    ratio < 1.0 - cfg.clip_ratio
                };
                if clipped_out {
                    continue;
                }
                // d(-surrogate)/d(logp_new)
                let dlp = -s.adv * ratio / n;
                let mut dout = [0.0; 2];
                for i in 0..2 {
                    let std = policy.log_std[i].exp();
                    let z = (s.action[i] - mean[i]) / std;
                    // through the Gaussian mean and the tanh squash
                    dout[i] = dlp * (z / std) * (1.0 - mean[i] * mean[i]);
                    std_grads[i] += dlp * (z * z - 1.0);
                }
                policy.net.backward(&cache, &dout, &mut grads);
            }
            kl = kl_sum / n;
            epochs_used += 1;
            if kl > 1.5 * cfg.target_kl {
                break;
            }
            pi_opt.step(&mut policy.net.params, &grads);
            let mut ls = policy.log_std;
            std_opt.step(&mut ls, &std_grads);
            for i in 0..2 {
                policy.log_std[i] = ls[i].clamp(-2.5, 0.5);
            }
        }

        // ------------------------------------------------------------------
        // value updates
        // ------------------------------------------------------------------
        for _ in 0..cfg.value_epochs {
            let mut grads = vec![0.0; value_net.n_params()];
            for s in &buf {
                let cache = value_net.forward_train(&s.x);
                let v = cache.output()[0];
                let dv = (v - s.ret) / n;
                value_net.backward(&cache, &[dv], &mut grads);
            }
            v_opt.step(&mut value_net.params, &grads);
        }

        let mean_return = if ep_returns.is_empty() {
            f64::NAN
        } else {
            ep_returns.iter().sum::<f64>() / ep_returns.len() as f64
        };
        let mean_len = if ep_lens.is_empty() {
            n
        } else {
            ep_lens.iter().sum::<f64>() / ep_lens.len() as f64
        };
        stats.push(IterStats {
            iteration,
            mean_return,
            mean_episode_len: mean_len,
            kl,
            epochs_used,
        });
    }

    Ok(TrainReport {
        policy,
        iterations: stats,
    })
}
