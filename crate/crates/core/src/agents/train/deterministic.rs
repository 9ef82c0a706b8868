//! Deterministic policy gradient trainer: off-policy actor-critic with a
//! replay ring, target networks updated by Polyak averaging, and Gaussian
//! exploration noise.

use crate::agents::env::DrivingEnv;
use crate::agents::nn::{polyak, Adam, Mlp};
use crate::agents::policy::{gaussian, normalize_obs, Policy, PolicyKind};
use crate::agents::train::{IterStats, TrainReport};
use crate::agents::ObsSpace;
use crate::error::Result;
use crate::rollout::Termination;
use crate::scenario::ScenarioInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rewards are scaled by this factor before entering the critic so that the
/// targets stay in a range the squashed-linear head tracks comfortably.
pub const VALUE_SCALE: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct DeterministicPgConfig {
    pub space: ObsSpace,
    pub hidden: Vec<usize>,
    pub total_steps: usize,
    /// Steps driven by uniform-random actions before the actor takes over.
    pub warmup_steps: usize,
    pub update_every: usize,
    pub updates_per_block: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Target-network retention coefficient per update.
    pub polyak: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Stddev of exploration noise added to actions during collection.
    pub action_noise: f64,
    pub buffer_capacity: usize,
    /// Behavior-cloning warm start: episodes of the rule-based lane follower
    /// to imitate before gradient training (0 = from scratch).
    pub warmstart_episodes: usize,
    /// Minibatch regression steps spent on the warm start.
    pub warmstart_updates: usize,
    pub seed: u64,
}

impl Default for DeterministicPgConfig {
    fn default() -> Self {
        DeterministicPgConfig {
            space: ObsSpace::FourD,
            hidden: vec![256, 256],
            total_steps: 10_000,
            warmup_steps: 600,
            update_every: 100,
            updates_per_block: 40,
            batch_size: 128,
            gamma: 0.99,
            polyak: 0.995,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            action_noise: 0.1,
            buffer_capacity: 20_000,
            warmstart_episodes: 0,
            warmstart_updates: 1200,
            seed: 0,
        }
    }
}

struct Transition {
    x: Vec<f64>,
    action: [f64; 2],
    reward: f64,
    x_next: Vec<f64>,
    /// 1.0 on real terminals (collision, completion, leaving the course);
    /// 0.0 on horizon cutoffs, which bootstrap through the target critic.
    done: f64,
}

fn squash(raw: &[f64]) -> [f64; 2] {
    [raw[0].tanh(), raw[1].tanh()]
}

/// Train a deterministic policy on episodes drawn from `sampler`.
pub fn train(
    cfg: &DeterministicPgConfig,
    sampler: &mut dyn FnMut(&mut ChaCha8Rng) -> Result<ScenarioInstance>,
) -> Result<TrainReport> {
    let dim = cfg.space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut actor_sizes = vec![dim];
    actor_sizes.extend(&cfg.hidden);
    actor_sizes.push(2);
    let mut critic_sizes = vec![dim + 2];
    critic_sizes.extend(&cfg.hidden);
    critic_sizes.push(1);

    let mut actor = Mlp::new(&actor_sizes, &mut rng);
    let mut critic = Mlp::new(&critic_sizes, &mut rng);
    if cfg.warmstart_episodes > 0 {
        super::clone_rule_based_driver(
            &mut actor,
            cfg.space,
            cfg.warmstart_episodes,
            cfg.warmstart_updates,
            sampler,
            &mut rng,
        )?;
    }
    let mut actor_target = actor.clone();
    let mut critic_target = critic.clone();
    let mut actor_opt = Adam::new(actor.n_params(), cfg.actor_lr);
    let mut critic_opt = Adam::new(critic.n_params(), cfg.critic_lr);

    let mut buffer: Vec<Transition> = Vec::with_capacity(cfg.buffer_capacity.min(4096));
    let mut write_at = 0usize;

    let mut env = DrivingEnv::new(cfg.space, sampler(&mut rng)?);
    let mut obs = env.obs()?;
    let mut ep_ret = 0.0;
    let mut ep_len = 0.0;
    let mut block_returns: Vec<f64> = Vec::new();
    let mut block_lens: Vec<f64> = Vec::new();
    let mut stats = Vec::new();

    for step_idx in 0..cfg.total_steps {
        let x = normalize_obs(cfg.space, &obs);
        let action = if step_idx < cfg.warmup_steps {
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
        } else {
            let mean = squash(&actor.forward(&x));
            [
                (mean[0] + cfg.action_noise * gaussian(&mut rng)).clamp(-1.0, 1.0),
                (mean[1] + cfg.action_noise * gaussian(&mut rng)).clamp(-1.0, 1.0),
            ]
        };
        let step = env.step(action)?;
        ep_ret += step.reward;
        ep_len += 1.0;
        let done_flag = match step.termination {
            Some(Termination::Timeout) | None => 0.0,
            Some(_) => 1.0,
        };
        let x_next = normalize_obs(cfg.space, &step.obs);
        let tr = Transition {
            x,
            action,
            reward: step.reward * VALUE_SCALE,
            x_next,
            done: done_flag,
        };
        if buffer.len() < cfg.buffer_capacity {
            buffer.push(tr);
        } else {
            buffer[write_at] = tr;
        }
        write_at = (write_at + 1) % cfg.buffer_capacity;

        if step.done {
            block_returns.push(ep_ret);
            block_lens.push(ep_len);
            ep_ret = 0.0;
            ep_len = 0.0;
            env = DrivingEnv::new(cfg.space, sampler(&mut rng)?);
            obs = env.obs()?;
        } else {
            obs = step.obs;
        }

        let steps_done = step_idx + 1;
        if steps_done % cfg.update_every != 0 || steps_done <= cfg.warmup_steps {
            continue;
        }

        for _ in 0..cfg.updates_per_block {
            // Sample a batch of indices first so the RNG stream does not
            // depend on gradient internals.
            let idx: Vec<usize> = (0..cfg.batch_size)
                .map(|_| rng.gen_range(0..buffer.len()))
                .collect();
            let inv_b = 1.0 / cfg.batch_size as f64;

            let mut critic_grads = vec![0.0; critic.n_params()];
            let mut actor_grads = vec![0.0; actor.n_params()];
            let mut scratch = vec![0.0; critic.n_params()];
            for &j in &idx {
                let t = &buffer[j];
                // Critic regression toward the frozen-target backup.
                let a_next = squash(&actor_target.forward(&t.x_next));
                let mut in_next = t.x_next.clone();
                in_next.extend_from_slice(&a_next);
                let q_next = critic_target.forward(&in_next)[0];
                let y = t.reward + cfg.gamma * (1.0 - t.done) * q_next;
                let mut q_in = t.x.clone();
                q_in.extend_from_slice(&t.action);
                let cache = critic.forward_train(&q_in);
                let dq = (cache.output()[0] - y) * inv_b;
                critic.backward(&cache, &[dq], &mut critic_grads);

                // Actor ascends the critic: d(-Q)/da chained through the
                // critic's input gradient and the tanh squash.
                let a_cache = actor.forward_train(&t.x);
                let a_pi = squash(a_cache.output());
                let mut pi_in = t.x.clone();
                pi_in.extend_from_slice(&a_pi);
                let q_cache = critic.forward_train(&pi_in);
                scratch.iter_mut().for_each(|g| *g = 0.0);
                let dx = critic.backward(&q_cache, &[-inv_b], &mut scratch);
                let dout = [
                    dx[dim] * (1.0 - a_pi[0] * a_pi[0]),
                    dx[dim + 1] * (1.0 - a_pi[1] * a_pi[1]),
                ];
                actor.backward(&a_cache, &dout, &mut actor_grads);
            }
            critic_opt.step(&mut critic.params, &critic_grads);
            actor_opt.step(&mut actor.params, &actor_grads);
            polyak(&mut critic_target.params, &critic.params, cfg.polyak);
            polyak(&mut actor_target.params, &actor.params, cfg.polyak);
        }

        let block = steps_done / cfg.update_every - 1;
        let mean_return = if block_returns.is_empty() {
            f64::NAN
        } else {
            block_returns.iter().sum::<f64>() / block_returns.len() as f64
        };
        let mean_len = if block_lens.is_empty() {
            0.0
        } else {
            block_lens.iter().sum::<f64>() / block_lens.len() as f64
        };
        stats.push(IterStats {
            iteration: block,
            mean_return,
            mean_episode_len: mean_len,
            kl: 0.0,
            epochs_used: cfg.updates_per_block,
        });
        block_returns.clear();
        block_lens.clear();
    }

    let policy = Policy::new(PolicyKind::DeterministicPg, cfg.space, actor, cfg.seed);
    Ok(TrainReport {
        policy,
        iterations: stats,
    })
}
