//! Parameterized pre-crash scenarios.
//!
//! A scenario is a (template, route, parameter vector) triple. Templates fix
//! the road topology, the cast of actors, and the meaning of each parameter;
//! routes vary the geometry; the parameters position and drive the adversary.
//! Instantiation produces a ready-to-run world plus a behavior table for the
//! scripted actors.

pub mod behavior;
pub mod layout;
pub mod library;

use crate::error::{CoreError, Result};
use crate::geom::Vec2;
use crate::sim::world::{Actor, ActorId, ActorKind, WorldState};
use crate::sim::VehicleState;
use behavior::{AdversaryCfg, AutopilotCfg, Behavior, PreTrigger, YieldMode, PROFILE_SEGMENTS};
pub use layout::{layout, Layout, ROUTE_COUNT, TEMPLATE_COUNT};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Scenario-producing algorithms plus the two baselines.
#[derive(
    Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorId {
    /// Learned sampling distribution over initial conditions.
    Lc,
    /// Surrogate-model search (Bayesian optimization).
    As,
    /// Combinatorial grid over initial conditions with rule filters.
    Cs,
    /// Trajectory-perturbation search (particle swarm).
    At,
    /// Uniform random sampling baseline.
    Random,
    /// Canonical lawful traffic (no adversary).
    Benign,
}

impl GeneratorId {
    pub const ALL: [GeneratorId; 6] = [
        GeneratorId::Lc,
        GeneratorId::As,
        GeneratorId::Cs,
        GeneratorId::At,
        GeneratorId::Random,
        GeneratorId::Benign,
    ];
    /// The four guided algorithms (excludes the baselines).
    pub const GUIDED: [GeneratorId; 4] = [
        GeneratorId::Lc,
        GeneratorId::As,
        GeneratorId::Cs,
        GeneratorId::At,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorId::Lc => "lc",
            GeneratorId::As => "as",
            GeneratorId::Cs => "cs",
            GeneratorId::At => "at",
            GeneratorId::Random => "random",
            GeneratorId::Benign => "benign",
        }
    }
}

impl fmt::Display for GeneratorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorId {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        GeneratorId::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| CoreError::InvalidSpec(format!("unknown generator '{s}'")))
    }
}

/// One scenario parameter: name and inclusive bounds.
#[derive(Copy, Clone, Debug)]
pub struct ParamDef {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

impl ParamDef {
    pub const fn new(name: &'static str, lo: f64, hi: f64) -> Self {
        ParamDef { name, lo, hi }
    }
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Parameters for the staged-obstacle templates (1 and 2). The ranges are
/// deliberately wide: most draws give the ego room to react, and only the
/// tight-timing corners (short trigger, mid crossing speed) are dangerous.
const OBSTACLE_PARAMS: [ParamDef; 4] = [
    ParamDef::new("spawn_dist", 10.0, 40.0),
    ParamDef::new("lateral_offset", -3.0, 3.0),
    ParamDef::new("trigger_dist", 5.0, 60.0),
    ParamDef::new("actor_speed", 2.0, 8.0),
];

/// Parameters for the vehicle-adversary templates (3 through 8): three
/// initial-condition dimensions plus a 4-segment perturbation profile.
/// Steering deltas are bounded well below the saturation limit so the
/// adversary's lane tracker stays in charge and a perturbation shifts its
/// path by at most a lane's width.
const VEHICLE_PARAMS: [ParamDef; 11] = [
    ParamDef::new("init_gap", 5.0, 55.0),
    ParamDef::new("adv_speed", 3.0, 12.0),
    ParamDef::new("trigger_dist", 5.0, 60.0),
    ParamDef::new("seg1_daccel", -2.0, 2.0),
    ParamDef::new("seg1_dsteer", -0.15, 0.15),
    ParamDef::new("seg2_daccel", -2.0, 2.0),
    ParamDef::new("seg2_dsteer", -0.15, 0.15),
    ParamDef::new("seg3_daccel", -2.0, 2.0),
    ParamDef::new("seg3_dsteer", -0.15, 0.15),
    ParamDef::new("seg4_daccel", -2.0, 2.0),
    ParamDef::new("seg4_dsteer", -0.15, 0.15),
];

/// Static description of one scenario family.
#[derive(Clone, Debug)]
pub struct TemplateDef {
    pub id: u8,
    pub name: &'static str,
    pub adversary_kind: ActorKind,
    pub params: &'static [ParamDef],
    /// Leading parameters that form the initial-condition block (the rest is
    /// the trajectory-perturbation block).
    pub init_dims: usize,
}

pub const TEMPLATES: [TemplateDef; 8] = [
    TemplateDef {
        id: 1,
        name: "straight_obstacle",
        adversary_kind: ActorKind::Cyclist,
        params: &OBSTACLE_PARAMS,
        init_dims: 4,
    },
    TemplateDef {
        id: 2,
        name: "turning_obstacle",
        adversary_kind: ActorKind::Pedestrian,
        params: &OBSTACLE_PARAMS,
        init_dims: 4,
    },
    TemplateDef {
        id: 3,
        name: "lane_changing",
        adversary_kind: ActorKind::Vehicle,
        params: &VEHICLE_PARAMS,
        init_dims: 3,
    },
    TemplateDef {
        id: 4,
        name: "vehicle_passing",
        adversary_kind: ActorKind::Vehicle,
        params: &VEHICLE_PARAMS,
        init_dims: 3,
    },
    TemplateDef {
        id: 5,
        name: "red_light_running",
        adversary_kind: ActorKind::Vehicle,
        params: &VEHICLE_PARAMS,
        init_dims: 3,
    },
    TemplateDef {
        id: 6,
        name: "unprotected_left_turn",
        adversary_kind: ActorKind::Vehicle,
        params: &VEHICLE_PARAMS,
        init_dims: 3,
    },
    TemplateDef {
        id: 7,
        name: "right_turn",
        adversary_kind: ActorKind::Vehicle,
        params: &VEHICLE_PARAMS,
        init_dims: 3,
    },
    TemplateDef {
        id: 8,
        name: "crossing_negotiation",
        adversary_kind: ActorKind::Vehicle,
        params: &VEHICLE_PARAMS,
        init_dims: 3,
    },
];

/// Look up a template by id (1-based).
pub fn template(id: u8) -> Result<&'static TemplateDef> {
    TEMPLATES
        .get(id.wrapping_sub(1) as usize)
        .ok_or_else(|| CoreError::InvalidSpec(format!("unknown template id {id}")))
}

/// A fully specified runnable scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub template_id: u8,
    pub route_id: u8,
    pub generator: GeneratorId,
    pub params: Vec<f64>,
    /// Base seed for everything stochastic in episodes run on this spec.
    pub seed: u64,
}

impl ScenarioSpec {
    /// Canonical lawful-traffic variant of a template: mid-range staging,
    /// zero perturbation, every actor driven by the autopilot.
    pub fn benign(template_id: u8, route_id: u8) -> Result<ScenarioSpec> {
        let def = template(template_id)?;
        let params = match def.id {
            1 | 2 => vec![25.0, 3.0, 15.0, 3.0],
            _ => {
                let mut p = vec![22.5, 7.5, 17.5];
                p.extend([0.0; 8]);
                p
            }
        };
        Ok(ScenarioSpec {
            template_id,
            route_id,
            generator: GeneratorId::Benign,
            params,
            seed: 0,
        })
    }

    /// All violations of the template's parameter contract (empty = valid).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let def = match template(self.template_id) {
            Ok(d) => d,
            Err(e) => return vec![e.to_string()],
        };
        if self.route_id >= ROUTE_COUNT {
            out.push(format!(
                "route id {} out of range 0..{ROUTE_COUNT}",
                self.route_id
            ));
        }
        if self.params.len() != def.params.len() {
            out.push(format!(
                "expected {} parameters for {}, got {}",
                def.params.len(),
                def.name,
                self.params.len()
            ));
            return out;
        }
        for (value, pd) in self.params.iter().zip(def.params) {
            if !value.is_finite() {
                out.push(format!("{} is not finite", pd.name));
            } else if *value < pd.lo - 1e-9 || *value > pd.hi + 1e-9 {
                out.push(format!(
                    "{} = {value} outside [{}, {}]",
                    pd.name, pd.lo, pd.hi
                ));
            }
        }
        out
    }

    /// Parameters scaled to the unit cube.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        let def = template(self.template_id)?;
        Ok(self
            .params
            .iter()
            .zip(def.params)
            .map(|(v, pd)| (v - pd.lo) / pd.span())
            .collect())
    }

    /// Build a spec from unit-cube coordinates (clamped to bounds).
    pub fn from_normalized(
        template_id: u8,
        route_id: u8,
        generator: GeneratorId,
        unit: &[f64],
        seed: u64,
    ) -> Result<ScenarioSpec> {
        let def = template(template_id)?;
        if unit.len() != def.params.len() {
            return Err(CoreError::InvalidSpec(format!(
                "expected {} coordinates, got {}",
                def.params.len(),
                unit.len()
            )));
        }
        let params = unit
            .iter()
            .zip(def.params)
            .map(|(u, pd)| pd.lo + pd.span() * u.clamp(0.0, 1.0))
            .collect();
        Ok(ScenarioSpec {
            template_id,
            route_id,
            generator,
            params,
            seed,
        })
    }
}

/// A ready-to-run episode: world state plus behavior table.
#[derive(Clone, Debug)]
pub struct ScenarioInstance {
    pub spec: ScenarioSpec,
    pub layout: Arc<Layout>,
    pub world: WorldState,
    pub behaviors: Vec<Behavior>,
    /// Actor id of the primary adversary (risk distances are measured to it).
    pub adversary_id: Option<ActorId>,
    /// Lane-following controller for the rule-based ego agent.
    pub ego_autopilot: AutopilotCfg,
}

/// How far off the drivable area the spec's staged actors would be placed
/// (0 = fully on-road). Parameter-bound violations are reported as errors.
pub fn placement_excursion(spec: &ScenarioSpec) -> Result<f64> {
    let v = spec.violations();
    if !v.is_empty() {
        return Err(CoreError::InvalidSpec(v.join("; ")));
    }
    let lay = layout(spec.template_id, spec.route_id)?;
    match spec.template_id {
        1 | 2 => {
            let spawn = obstacle_spawn(&lay, spec.params[0], spec.params[1]);
            Ok(lay.map.excursion(spawn))
        }
        _ => {
            // Vehicle adversaries are staged on their own lane; staging can
            // only leave the road if the gap runs past the path start.
            let adv = lay.adv_route.as_ref().expect("vehicle template has path");
            let s = adversary_spawn_arc(&lay, spec.params[0]);
            if s < 0.0 {
                return Ok(-s);
            }
            Ok(lay.map.excursion(adv.point_at(s)))
        }
    }
}

fn obstacle_spawn(lay: &Layout, spawn_dist: f64, offset: f64) -> Vec2 {
    let foot = lay.route.point_at(spawn_dist);
    let normal = lay.route.dir_at(spawn_dist).perp();
    foot + normal * offset
}

fn adversary_spawn_arc(lay: &Layout, gap: f64) -> f64 {
    match lay.template_id {
        3 => lay.adv_base_s + gap,
        // Oncoming lane: staged `gap` meters beyond the parked blocker.
        4 => lay.adv_base_s - gap,
        _ => lay.adv_conflict_s - gap,
    }
}

/// Turn a spec into a runnable world. Rejects parameter violations and
/// off-road staging.
pub fn instantiate(spec: &ScenarioSpec) -> Result<ScenarioInstance> {
    let excess = placement_excursion(spec)?;
    if excess > 0.0 {
        return Err(CoreError::OffRoadPlacement { excess });
    }
    let lay = layout(spec.template_id, spec.route_id)?;
    let def = template(spec.template_id)?;
    let benign = spec.generator == GeneratorId::Benign;
    let limit = lay.speed_limit;

    let ego = VehicleState::car(
        lay.route.point_at(0.0),
        lay.route.heading_at(0.0),
        lay.ego_start_speed,
    );

    let mut actors: Vec<Actor> = Vec::new();
    let mut behaviors: Vec<Behavior> = Vec::new();
    let push = |actors: &mut Vec<Actor>, behaviors: &mut Vec<Behavior>,
                    kind: ActorKind,
                    state: VehicleState,
                    b: Behavior| {
        let id = actors.len() as ActorId + 1;
        let handle = behaviors.len() as u32;
        actors.push(Actor {
            id,
            kind,
            state,
            behavior: handle,
        });
        behaviors.push(b);
    };

    let profile = |params: &[f64]| -> [[f64; 2]; PROFILE_SEGMENTS] {
        let mut p = [[0.0; 2]; PROFILE_SEGMENTS];
        for (k, chunk) in params[def.init_dims..].chunks(2).enumerate() {
            p[k] = [chunk[0], chunk[1]];
        }
        p
    };

    match spec.template_id {
        1 | 2 => {
            let (spawn_dist, offset, trigger, speed) = (
                spec.params[0],
                spec.params[1],
                spec.params[2],
                spec.params[3],
            );
            let spawn = obstacle_spawn(&lay, spawn_dist, offset);
            let normal = lay.route.dir_at(spawn_dist).perp();
            let cross_dir = if offset > 0.0 { -normal } else { normal };
            let cross_end = spawn + cross_dir * (offset.abs() + 10.0);
            let cross_route = Arc::new(
                crate::geom::Polyline::new(vec![spawn, cross_end]).expect("crossing path"),
            );
            let mk_state = |heading: f64, v: f64| match def.adversary_kind {
                ActorKind::Cyclist => VehicleState::cyclist(spawn, heading, v),
                ActorKind::Pedestrian => VehicleState::pedestrian(spawn, heading, v),
                ActorKind::Vehicle => VehicleState::car(spawn, heading, v),
            };
            if benign {
                push(
                    &mut actors,
                    &mut behaviors,
                    def.adversary_kind,
                    mk_state(cross_dir.angle(), 0.0),
                    Behavior::Static,
                );
            } else {
                push(
                    &mut actors,
                    &mut behaviors,
                    def.adversary_kind,
                    mk_state(cross_dir.angle(), 0.0),
                    Behavior::Adversary {
                        cfg: AdversaryCfg {
                            route: cross_route,
                            cruise_speed: speed,
                            pre_trigger: PreTrigger::Hold,
                            trigger_anchor: spawn,
                            trigger_dist: trigger,
                            profile: [[0.0; 2]; PROFILE_SEGMENTS],
                            open_loop_nominal: false,
                        },
                        activated_tick: None,
                    },
                );
            }
        }
        3 => {
            let adv_route = lay.adv_route.clone().expect("lead path");
            let (gap, adv_speed, trigger) = (spec.params[0], spec.params[1], spec.params[2]);
            let s = adversary_spawn_arc(&lay, gap);
            let pos = adv_route.point_at(s);
            let heading = adv_route.heading_at(s);
            let cruise = if benign { adv_speed.min(limit) } else { adv_speed };
            let b = if benign {
                Behavior::Autopilot(AutopilotCfg::new(
                    adv_route.clone(),
                    cruise,
                    &lay.map,
                    YieldMode::InsideOnly,
                ))
            } else {
                Behavior::Adversary {
                    cfg: AdversaryCfg {
                        route: adv_route.clone(),
                        cruise_speed: cruise,
                        pre_trigger: PreTrigger::Cruise,
                        trigger_anchor: pos,
                        trigger_dist: trigger,
                        profile: profile(&spec.params),
                        open_loop_nominal: false,
                    },
                    activated_tick: None,
                }
            };
            push(
                &mut actors,
                &mut behaviors,
                ActorKind::Vehicle,
                VehicleState::car(pos, heading, cruise),
                b,
            );
            // Scripted neighbor occupying the adjacent lane.
            let nb_route = lay.neighbor_route.clone().expect("neighbor path");
            let nb_s = nb_route.project(lay.route.point_at(0.0)).s + gap + 10.0;
            let nb_pos = nb_route.point_at(nb_s);
            let nb_heading = nb_route.heading_at(nb_s);
            push(
                &mut actors,
                &mut behaviors,
                ActorKind::Vehicle,
                VehicleState::car(nb_pos, nb_heading, limit),
                Behavior::Autopilot(AutopilotCfg::new(
                    nb_route,
                    limit,
                    &lay.map,
                    YieldMode::InsideOnly,
                )),
            );
        }
        4 => {
            let adv_route = lay.adv_route.clone().expect("oncoming path");
            let (gap, adv_speed, trigger) = (spec.params[0], spec.params[1], spec.params[2]);
            // The parked vehicle sits at the layout's conflict point, on the
            // shoulder beside the ego lane; it anchors the oncoming car's
            // trigger but never obstructs a lane-keeping ego.
            let blocker_pos = lay.conflict;
            let blocker_heading = lay.route.heading_at(0.0);
            if benign {
                // Benign traffic: the oncoming car has already cleared the
                // passing zone at spawn time and recedes toward the far end.
                let s = lay.adv_base_s + gap;
                let pos = adv_route.point_at(s);
                let heading = adv_route.heading_at(s);
                let cruise = adv_speed.min(limit);
                push(
                    &mut actors,
                    &mut behaviors,
                    ActorKind::Vehicle,
                    VehicleState::car(pos, heading, cruise),
                    Behavior::Autopilot(AutopilotCfg::new(
                        adv_route.clone(),
                        cruise,
                        &lay.map,
                        YieldMode::InsideOnly,
                    )),
                );
            } else {
                let s = adversary_spawn_arc(&lay, gap);
                let pos = adv_route.point_at(s);
                let heading = adv_route.heading_at(s);
                push(
                    &mut actors,
                    &mut behaviors,
                    ActorKind::Vehicle,
                    VehicleState::car(pos, heading, 0.0),
                    Behavior::Adversary {
                        cfg: AdversaryCfg {
                            route: adv_route.clone(),
                            cruise_speed: adv_speed,
                            pre_trigger: PreTrigger::Hold,
                            trigger_anchor: blocker_pos,
                            trigger_dist: trigger,
                            profile: profile(&spec.params),
                            open_loop_nominal: false,
                        },
                        activated_tick: None,
                    },
                );
            }
            push(
                &mut actors,
                &mut behaviors,
                ActorKind::Vehicle,
                VehicleState::car(blocker_pos, blocker_heading, 0.0),
                Behavior::Static,
            );
        }
        _ => {
            // Junction templates: adversary staged on its approach lane.
            let adv_route = lay.adv_route.clone().expect("adversary path");
            let (gap, adv_speed, trigger) = (spec.params[0], spec.params[1], spec.params[2]);
            let s = adversary_spawn_arc(&lay, gap);
            let pos = adv_route.point_at(s);
            let heading = adv_route.heading_at(s);
            if benign {
                let cruise = adv_speed.min(limit);
                push(
                    &mut actors,
                    &mut behaviors,
                    ActorKind::Vehicle,
                    VehicleState::car(pos, heading, cruise),
                    Behavior::Autopilot(AutopilotCfg::new(
                        adv_route.clone(),
                        cruise,
                        &lay.map,
                        YieldMode::InsideOnly,
                    )),
                );
            } else {
                push(
                    &mut actors,
                    &mut behaviors,
                    ActorKind::Vehicle,
                    VehicleState::car(pos, heading, 0.0),
                    Behavior::Adversary {
                        cfg: AdversaryCfg {
                            route: adv_route.clone(),
                            cruise_speed: adv_speed,
                            pre_trigger: PreTrigger::Hold,
                            trigger_anchor: lay.conflict,
                            trigger_dist: trigger,
                            profile: profile(&spec.params),
                            open_loop_nominal: false,
                        },
                        activated_tick: None,
                    },
                );
            }
        }
    }

    let world = WorldState::new(
        ego,
        actors,
        lay.map.clone(),
        lay.route.clone(),
        lay.lane_width,
    );
    let ego_autopilot = AutopilotCfg::new(lay.route.clone(), limit, &lay.map, YieldMode::Cautious);
    Ok(ScenarioInstance {
        spec: spec.clone(),
        layout: lay,
        world,
        behaviors,
        adversary_id: Some(1),
        ego_autopilot,
    })
}
