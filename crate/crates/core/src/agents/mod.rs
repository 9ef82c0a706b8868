//! Ego agents: observation extraction, the driving reward, and the agent
//! dispatch used by evaluation (rule-based, random, and trained policies).

pub mod env;
pub mod nn;
pub mod policy;
pub mod train;

use crate::error::{CoreError, Result};
use crate::geom::{wrap_angle, Vec2};
use crate::scenario::behavior::{autopilot_control, AutopilotCfg};
use crate::scenario::ScenarioInstance;
use crate::sim::world::WorldState;
use crate::sim::Control;
use policy::Policy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Observation layouts available to trained policies.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsSpace {
    /// `[lateral deviation (signed), longitudinal speed, yaw rate, front-vehicle flag]`
    #[serde(rename = "4d")]
    FourD,
    /// The 4-dim state plus a navigation command one-hot (left/straight/right),
    /// the ego heading unit vector, and the unit direction to a waypoint 8 m
    /// ahead on the route.
    #[serde(rename = "4d_dir")]
    FourDDir,
}

impl ObsSpace {
    pub fn dim(self) -> usize {
        match self {
            ObsSpace::FourD => 4,
            ObsSpace::FourDDir => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObsSpace::FourD => "4d",
            ObsSpace::FourDDir => "4d_dir",
        }
    }
}

impl std::str::FromStr for ObsSpace {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4d" => Ok(ObsSpace::FourD),
            "4d_dir" => Ok(ObsSpace::FourDDir),
            other => Err(CoreError::InvalidSpec(format!(
                "unknown observation space '{other}'"
            ))),
        }
    }
}

/// Route-heading change (rad) beyond which the upcoming stretch counts as a
/// turn for the navigation command.
const COMMAND_TURN_THRESHOLD: f64 = 0.35;
/// The navigation command looks this far ahead along the route (m).
const COMMAND_LOOKAHEAD: f64 = 20.0;
/// The waypoint-direction feature aims at this arc offset (m).
const WAYPOINT_LOOKAHEAD: f64 = 8.0;

/// Extract the observation vector for `space` from the current world state.
pub fn extract_observation(world: &WorldState, space: ObsSpace) -> Result<Vec<f64>> {
    let route = &world.route;
    let pr = route.project(world.ego.pos());
    let lane_heading = route.heading_at(pr.s);
    let lon_speed = world.ego.speed * (world.ego.heading - lane_heading).cos();

    let mut obs = vec![
        world.signed_deviation(),
        lon_speed,
        world.ego_yaw_rate,
        if world.front_vehicle() { 1.0 } else { 0.0 },
    ];

    if space == ObsSpace::FourDDir {
        let ahead = route.heading_at((pr.s + COMMAND_LOOKAHEAD).min(route.len()));
        let turn = wrap_angle(ahead - lane_heading);
        let command = if turn > COMMAND_TURN_THRESHOLD {
            [1.0, 0.0, 0.0] // left
        } else if turn < -COMMAND_TURN_THRESHOLD {
            [0.0, 0.0, 1.0] // right
        } else {
            [0.0, 1.0, 0.0] // straight
        };
        obs.extend(command);
        let hd = Vec2::from_angle(world.ego.heading);
        obs.extend([hd.x, hd.y]);
        let wp = route.point_at((pr.s + WAYPOINT_LOOKAHEAD).min(route.len()));
        let to_wp = (wp - world.ego.pos()).normalized_or(hd);
        obs.extend([to_wp.x, to_wp.y]);
    }

    for (i, v) in obs.iter().enumerate() {
        if !v.is_finite() {
            return Err(CoreError::NonFinite("observation"));
        }
        let _ = i;
    }
    if obs.len() != space.dim() {
        return Err(CoreError::ObsDim {
            expected: space.dim(),
            got: obs.len(),
        });
    }
    Ok(obs)
}

/// Speed above which the overspeed penalty applies (m/s).
pub const OVERSPEED_LIMIT: f64 = 9.0;

/// The driving reward, reported term by term.
///
/// `total = lon_speed - 0.2 * |steer| * lon_speed^2 - 5 * steer^2
///          - collision - out_of_lane - overspeed + alive`
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    /// Longitudinal progress: the speed itself.
    pub progress: f64,
    /// Comfort coupling: `-0.2 * |steer| * v^2`.
    pub lateral_smooth: f64,
    /// Steering effort: `-5 * steer^2`.
    pub steer_cost: f64,
    /// `-1` on any collision this step.
    pub collision: f64,
    /// `-1` while outside the route lane corridor.
    pub out_of_lane: f64,
    /// `-10` while faster than the 9 m/s cap.
    pub overspeed: f64,
    /// Constant living bonus `+0.1`.
    pub alive: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.progress
            + self.lateral_smooth
            + self.steer_cost
            + self.collision
            + self.out_of_lane
            + self.overspeed
            + self.alive
    }
}

/// Compute the per-step reward from the post-step facts.
pub fn compute_reward(
    lon_speed: f64,
    steer: f64,
    collided: bool,
    out_of_lane: bool,
) -> RewardTerms {
    RewardTerms {
        progress: lon_speed,
        lateral_smooth: -0.2 * steer.abs() * lon_speed * lon_speed,
        steer_cost: -5.0 * steer * steer,
        collision: if collided { -1.0 } else { 0.0 },
        out_of_lane: if out_of_lane { -1.0 } else { 0.0 },
        overspeed: if lon_speed > OVERSPEED_LIMIT {
            -10.0
        } else {
            0.0
        },
        alive: 0.1,
    }
}

/// An ego controller under evaluation.
#[derive(Clone)]
pub enum EgoAgent {
    /// Lane-following autopilot obeying lights, signs, and junction yields.
    RuleBased,
    /// Uniform random actions (stress baseline).
    Random,
    /// A trained policy; `stochastic = true` samples, otherwise acts on the mean.
    Trained {
        policy: Arc<Policy>,
        stochastic: bool,
        label: String,
    },
}

impl EgoAgent {
    pub fn trained(policy: Arc<Policy>, stochastic: bool, label: impl Into<String>) -> Self {
        EgoAgent::Trained {
            policy,
            stochastic,
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            EgoAgent::RuleBased => "rule_based",
            EgoAgent::Random => "random",
            EgoAgent::Trained { label, .. } => label,
        }
    }

    /// Pick a control at the current (pre-step) state.
    pub fn control(
        &self,
        world: &WorldState,
        ego_cfg: &AutopilotCfg,
        rng: &mut ChaCha8Rng,
    ) -> Result<Control> {
        match self {
            EgoAgent::RuleBased => Ok(autopilot_control(world, &world.ego, None, ego_cfg)),
            EgoAgent::Random => {
                let accel = rng.gen_range(-3.0..=3.0);
                let steer = rng.gen_range(-0.3..=0.3);
                Ok(Control::clamped(accel, steer))
            }
            EgoAgent::Trained {
                policy, stochastic, ..
            } => {
                let obs = extract_observation(world, policy.space)?;
                let action = policy.act(&obs, *stochastic, rng)?;
                Ok(policy::action_to_control(action))
            }
        }
    }
}

/// Run one full episode of `agent` on `instance`, seeding the agent's action
/// stream with `seed`.
pub fn run_agent_episode(
    instance: ScenarioInstance,
    agent: &EgoAgent,
    seed: u64,
) -> Result<crate::rollout::Rollout> {
    let cfg = instance.ego_autopilot.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = agent.label().to_string();
    crate::rollout::run_episode(instance, &label, seed, |w| agent.control(w, &cfg, &mut rng))
}
