//! Trained ego policies: a tanh-squashed MLP mean with either a learned
//! state-independent Gaussian (stochastic policy gradient) or deterministic
//! actuation plus exploration noise (deterministic policy gradient).
//!
//! Actions are normalized to `[-1, 1]^2` and scaled to the control ranges
//! (acceleration ±3 m/s², steering ±0.3 rad) at the simulator boundary.

use crate::agents::nn::Mlp;
use crate::agents::ObsSpace;
use crate::error::{CoreError, Result};
use crate::seeding::fnv1a;
use crate::sim::Control;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

pub const POLICY_SCHEMA: &str = "policy/v1";
/// Policy acceleration authority (m/s²), narrower than the plant's brake limit.
pub const ACTION_ACCEL_RANGE: f64 = 3.0;
/// Policy steering authority (rad).
pub const ACTION_STEER_RANGE: f64 = 0.3;

/// Fixed observation scaling applied before the network (keeps inputs O(1)).
pub fn normalize_obs(space: ObsSpace, obs: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = obs.to_vec();
    // [deviation, speed, yaw rate, front flag, ...direction features]
    x[0] *= 0.2;
    x[1] *= 0.1;
    let _ = space;
    x
}

/// Which training family produced the policy.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    StochasticPg,
    DeterministicPg,
}

/// A trained policy: network, action distribution, and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub schema: String,
    pub kind: PolicyKind,
    pub space: ObsSpace,
    pub net: Mlp,
    /// Log standard deviation per action dim (stochastic policies).
    pub log_std: [f64; 2],
    /// Seed the training run was launched with.
    pub train_seed: u64,
    /// Hash of the environment contract the policy was trained against.
    pub env_hash: u64,
}

/// Fingerprint of everything a checkpoint silently assumes about the
/// environment: observation layout, action scaling, and reward shape.
pub fn env_contract_hash(space: ObsSpace) -> u64 {
    let contract = format!(
        "obs={} dim={} accel={} steer={} overspeed={} alive=0.1",
        space.name(),
        space.dim(),
        ACTION_ACCEL_RANGE,
        ACTION_STEER_RANGE,
        crate::agents::OVERSPEED_LIMIT,
    );
    fnv1a(contract.as_bytes())
}

impl Policy {
    pub fn new(kind: PolicyKind, space: ObsSpace, net: Mlp, train_seed: u64) -> Self {
        Policy {
            schema: POLICY_SCHEMA.to_string(),
            kind,
            space,
            net,
            log_std: [-0.5; 2],
            train_seed,
            env_hash: env_contract_hash(space),
        }
    }

    /// Squashed action mean in `[-1, 1]^2`.
    pub fn mean(&self, obs: &[f64]) -> Result<[f64; 2]> {
        if obs.len() != self.space.dim() {
            return Err(CoreError::ObsDim {
                expected: self.space.dim(),
                got: obs.len(),
            });
        }
        let x = normalize_obs(self.space, obs);
        let out = self.net.forward(&x);
        Ok([out[0].tanh(), out[1].tanh()])
    }

    /// Act on an observation. Stochastic sampling adds Gaussian noise in the
    /// normalized action space; the result is clipped to `[-1, 1]`.
    pub fn act(&self, obs: &[f64], stochastic: bool, rng: &mut ChaCha8Rng) -> Result<[f64; 2]> {
        let mean = self.mean(obs)?;
        if !stochastic {
            return Ok(mean);
        }
        let noise = match self.kind {
            PolicyKind::StochasticPg => [
                gaussian(rng) * self.log_std[0].exp(),
                gaussian(rng) * self.log_std[1].exp(),
            ],
            // Deterministic policies explore with fixed-scale noise.
            PolicyKind::DeterministicPg => [gaussian(rng) * 0.1, gaussian(rng) * 0.1],
        };
        Ok([
            (mean[0] + noise[0]).clamp(-1.0, 1.0),
            (mean[1] + noise[1]).clamp(-1.0, 1.0),
        ])
    }

    /// Sample an unclipped action plus its log-probability (training path for
    /// the stochastic policy gradient).
    pub fn sample_raw(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<([f64; 2], f64)> {
        let mean = self.mean(obs)?;
        let mut a = [0.0; 2];
        for i in 0..2 {
            a[i] = mean[i] + gaussian(rng) * self.log_std[i].exp();
        }
        Ok((a, self.log_prob_of(mean, a)))
    }

    /// Log-probability of `action` under the Gaussian at `mean`.
    pub fn log_prob_of(&self, mean: [f64; 2], action: [f64; 2]) -> f64 {
        let mut lp = 0.0;
        for i in 0..2 {
            let std = self.log_std[i].exp();
            let z = (action[i] - mean[i]) / std;
            lp += -0.5 * z * z - self.log_std[i] - 0.5 * TAU.ln();
        }
        lp
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Policy> {
        let text = std::fs::read_to_string(path)?;
        let p: Policy = serde_json::from_str(&text)?;
        if p.schema != POLICY_SCHEMA {
            return Err(CoreError::Schema {
                found: p.schema,
                expected: POLICY_SCHEMA.to_string(),
            });
        }
        if p.env_hash != env_contract_hash(p.space) {
            return Err(CoreError::InvalidSpec(format!(
                "checkpoint trained against a different environment contract \
                 (found {:#x}, expected {:#x})",
                p.env_hash,
                env_contract_hash(p.space)
            )));
        }
        Ok(p)
    }
}

/// Map a normalized action to a control command.
pub fn action_to_control(a: [f64; 2]) -> Control {
    Control::clamped(
        a[0].clamp(-1.0, 1.0) * ACTION_ACCEL_RANGE,
        a[1].clamp(-1.0, 1.0) * ACTION_STEER_RANGE,
    )
}

/// Standard normal via Box-Muller (two uniform draws per sample keeps the
/// stream layout simple and reproducible).
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}
