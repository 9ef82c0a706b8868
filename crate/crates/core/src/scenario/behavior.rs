//! Scripted road users: lane-keeping autopilot and trigger-activated
//! adversaries.
//!
//! The exact same controller drives benign actors and the rule-based ego:
//! pure-pursuit steering along a reference path plus an IDM-style longitudinal
//! law that respects leads, traffic lights, stop signs, and junction yielding.
//! Adversaries follow a nominal tracked path until the ego comes within a
//! trigger distance, then add a 4-segment open-loop (acceleration, steering)
//! perturbation profile on top of the nominal control.

use crate::geom::{segments_intersect, wrap_angle, Polyline, Vec2};
use crate::sim::map::{LightPhase, WorldMap};
use crate::sim::world::{ActorId, WorldState};
use crate::sim::{Control, VehicleState, ACCEL_MAX, DT, STEER_MAX};
use std::collections::BTreeMap;
use std::sync::Arc;

// IDM-style longitudinal parameters.
const IDM_ACCEL: f64 = 2.0;
const IDM_BRAKE: f64 = 3.0;
const IDM_MIN_GAP: f64 = 2.0;
/// Desired time headway (s); equilibrium following distance is
/// `IDM_MIN_GAP + IDM_HEADWAY * v`, i.e. at least two seconds of travel.
const IDM_HEADWAY: f64 = 2.0;
/// Lateral encroachment (m off my path) within which a body counts as a lead.
const LEAD_WIDTH: f64 = 1.6;
const LEAD_HORIZON: f64 = 40.0;
/// Stop this far short of a stop line or junction entry (m).
const STOP_STAND_OFF: f64 = 2.0;
/// Brake for a yellow light only if it takes no more than this (m/s^2).
const YELLOW_MAX_BRAKE: f64 = 5.0;
/// How far ahead of a junction entry the cautious yield rule engages (m).
const YIELD_LOOKAHEAD: f64 = 15.0;
/// Bodies within this distance of the junction boundary count as approaching.
const YIELD_INFLATE: f64 = 8.0;
/// Adversary perturbation profile: segment count and duration.
pub const PROFILE_SEGMENTS: usize = 4;
pub const SEGMENT_SECONDS: f64 = 5.0;

/// A point along a route where stopping may be required.
#[derive(Clone, Debug)]
pub struct StopPoint {
    pub s: f64,
    pub kind: StopKind,
}

#[derive(Clone, Debug)]
pub enum StopKind {
    /// Index into `map.lights`.
    Light(usize),
    /// Index into `map.stop_signs`.
    Sign(usize),
    /// Index into `map.junctions`.
    Junction(usize),
}

/// How cautiously to yield at junctions.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum YieldMode {
    /// Wait while any other body is inside the junction or approaching it.
    /// Used by the rule-based ego.
    Cautious,
    /// Wait only while another body is inside the junction. Used by scripted
    /// actors (asymmetric rules prevent deadlock).
    InsideOnly,
    /// Ignore junction occupancy.
    None,
}

/// Configuration for one lane-following controller.
#[derive(Clone, Debug)]
pub struct AutopilotCfg {
    pub route: Arc<Polyline>,
    pub target_speed: f64,
    pub stops: Vec<StopPoint>,
    pub yield_mode: YieldMode,
}

impl AutopilotCfg {
    /// Autopilot along `route` with stop points discovered from the map.
    pub fn new(route: Arc<Polyline>, target_speed: f64, map: &WorldMap, yield_mode: YieldMode) -> Self {
        let stops = stops_for_route(&route, map);
        AutopilotCfg {
            route,
            target_speed,
            stops,
            yield_mode,
        }
    }
}

/// What an adversary does before its trigger fires.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PreTrigger {
    /// Stand still (brake to zero if moving).
    Hold,
    /// Track the nominal path at cruise speed.
    Cruise,
}

/// Trigger-activated adversary: nominal path tracking plus a 4 x 5 s
/// perturbation profile applied open-loop after activation.
#[derive(Clone, Debug)]
pub struct AdversaryCfg {
    pub route: Arc<Polyline>,
    pub cruise_speed: f64,
    pub pre_trigger: PreTrigger,
    /// Trigger fires when the ego comes within `trigger_dist` of this point.
    pub trigger_anchor: Vec2,
    pub trigger_dist: f64,
    /// Per-segment (acceleration, steering) deltas added to the nominal control.
    pub profile: [[f64; 2]; PROFILE_SEGMENTS],
    /// Replace the nominal controller with zero control (pure open-loop
    /// integration of the profile). Used by tests and calibration fixtures.
    pub open_loop_nominal: bool,
}

/// Behavior handle table entry for one actor.
#[derive(Clone, Debug)]
pub enum Behavior {
    /// Parked: zero control forever.
    Static,
    Autopilot(AutopilotCfg),
    Adversary {
        cfg: AdversaryCfg,
        activated_tick: Option<u32>,
    },
}

impl Behavior {
    /// Tick at which the adversary activated, if it has.
    pub fn activation(&self) -> Option<u32> {
        match self {
            Behavior::Adversary { activated_tick, .. } => *activated_tick,
            _ => None,
        }
    }
}

/// Compute controls for every actor against the pre-step world, updating
/// adversary activation state. Returns one entry per actor.
pub fn actor_controls(
    world: &WorldState,
    behaviors: &mut [Behavior],
) -> BTreeMap<ActorId, Control> {
    let mut out = BTreeMap::new();
    for actor in &world.actors {
        let behavior = behaviors
            .get_mut(actor.behavior as usize)
            .expect("behavior handle out of range");
        let c = match behavior {
            Behavior::Static => Control::ZERO,
            Behavior::Autopilot(cfg) => autopilot_control(world, &actor.state, Some(actor.id), cfg),
            Behavior::Adversary {
                cfg,
                activated_tick,
            } => adversary_control(world, &actor.state, cfg, activated_tick),
        };
        out.insert(actor.id, c);
    }
    out
}

// ---------------------------------------------------------------------------
// controllers
// ---------------------------------------------------------------------------

/// Pure-pursuit steering toward a lookahead point on `route`.
pub fn pure_pursuit(me: &VehicleState, route: &Polyline) -> f64 {
    let pr = route.project(me.pos());
    let lookahead = (1.5 + 0.6 * me.speed).clamp(3.0, 12.0);
    let target = route.point_at(pr.s + lookahead);
    let to_target = target - me.pos();
    let alpha = wrap_angle(to_target.angle() - me.heading);
    let ld = to_target.norm().max(1.0);
    (2.0 * me.wheelbase() * alpha.sin() / ld)
        .atan()
        .clamp(-STEER_MAX, STEER_MAX)
}

/// IDM acceleration toward `target_speed` with an optional lead at
/// `(gap, lead_speed)`. Gap is bumper-to-bumper.
pub fn idm_accel(speed: f64, target_speed: f64, lead: Option<(f64, f64)>) -> f64 {
    let v0 = target_speed.max(0.1);
    let free = IDM_ACCEL * (1.0 - (speed / v0).powi(4));
    let mut a = free;
    if let Some((gap, lead_speed)) = lead {
        let dv = speed - lead_speed;
        let s_star = IDM_MIN_GAP
            + speed * IDM_HEADWAY
            + speed * dv / (2.0 * (IDM_ACCEL * IDM_BRAKE).sqrt());
        let interaction =
            IDM_ACCEL * (1.0 - (speed / v0).powi(4) - (s_star.max(0.0) / gap.max(0.1)).powi(2));
        a = a.min(interaction);
    }
    a.clamp(crate::sim::ACCEL_MIN, IDM_ACCEL)
}

/// Full lane-following control: pure pursuit + IDM with stop handling.
pub fn autopilot_control(
    world: &WorldState,
    me: &VehicleState,
    me_id: Option<ActorId>,
    cfg: &AutopilotCfg,
) -> Control {
    let steer = pure_pursuit(me, &cfg.route);
    let my_s = cfg.route.project(me.pos()).s;

    // Nearest lead among all other bodies encroaching on my path.
    let mut lead: Option<(f64, f64)> = None;
    let mut consider = |state: &VehicleState| {
        let pr = cfg.route.project(state.pos());
        if pr.distance > LEAD_WIDTH {
            return;
        }
        let ds = pr.s - my_s;
        if ds <= 0.1 || ds > LEAD_HORIZON {
            return;
        }
        let gap = ds - me.half_length - state.half_length;
        let along = cfg.route.dir_at(pr.s);
        let lead_speed = state.speed * along.dot(Vec2::from_angle(state.heading)).max(0.0);
        if lead.map(|(g, _)| gap < g).unwrap_or(true) {
            lead = Some((gap, lead_speed));
        }
    };
    if me_id.is_some() {
        consider(&world.ego);
    }
    for other in &world.actors {
        if Some(other.id) == me_id {
            continue;
        }
        consider(&other.state);
    }

    let mut accel = idm_accel(me.speed, cfg.target_speed, lead);

    // Stop points: convert each applicable one into a stationary virtual lead.
    for sp in &cfg.stops {
        let d = sp.s - my_s;
        if d < -1.0 {
            continue;
        }
        let must_stop = match sp.kind {
            StopKind::Light(i) => match world.map.lights[i].phase_at(world.time()) {
                LightPhase::Red => true,
                LightPhase::Yellow => {
                    let braking_room = (d - STOP_STAND_OFF).max(0.1);
                    me.speed * me.speed / (2.0 * braking_room) <= YELLOW_MAX_BRAKE
                }
                LightPhase::Green => false,
            },
            // Only the ego tracks stop-sign satisfaction; scripted actors
            // treat signs as yield-free.
            StopKind::Sign(i) => me_id.is_none() && !world.stop_satisfied(i),
            StopKind::Junction(j) => {
                junction_busy(world, me_id, j, cfg.yield_mode) && d <= YIELD_LOOKAHEAD
            }
        };
        if must_stop {
            let gap = d - STOP_STAND_OFF;
            accel = accel.min(idm_accel(me.speed, cfg.target_speed, Some((gap, 0.0))));
        }
    }

    Control::clamped(accel, steer)
}

fn junction_busy(world: &WorldState, me_id: Option<ActorId>, j: usize, mode: YieldMode) -> bool {
    let junction = &world.map.junctions[j];
    let center = {
        let mut c = Vec2::ZERO;
        for p in &junction.pts {
            c += *p;
        }
        c * (1.0 / junction.pts.len() as f64)
    };
    let busy = |state: &VehicleState| -> bool {
        let pos = state.pos();
        match mode {
            YieldMode::None => false,
            YieldMode::InsideOnly => junction.contains(pos),
            YieldMode::Cautious => {
                if junction.contains(pos) {
                    return true;
                }
                if state.speed <= 0.5 || junction.distance(pos) > YIELD_INFLATE {
                    return false;
                }
                // Moving and near: only yield to bodies heading toward the junction.
                Vec2::from_angle(state.heading).dot(center - pos) > 0.0
            }
        }
    };
    let mut any = false;
    if me_id.is_some() {
        any |= busy(&world.ego);
    }
    for other in &world.actors {
        if Some(other.id) == me_id {
            continue;
        }
        any |= busy(&other.state);
    }
    any
}

/// Adversary control: tracks the nominal path, then layers the perturbation
/// profile after activation. Mutates `activated_tick` when the trigger fires.
pub fn adversary_control(
    world: &WorldState,
    me: &VehicleState,
    cfg: &AdversaryCfg,
    activated_tick: &mut Option<u32>,
) -> Control {
    if activated_tick.is_none()
        && world.ego.pos().dist(cfg.trigger_anchor) <= cfg.trigger_dist
    {
        *activated_tick = Some(world.tick);
    }
    let nominal = |speed_target: f64| -> Control {
        if cfg.open_loop_nominal {
            Control::ZERO
        } else {
            let steer = pure_pursuit(me, &cfg.route);
            let accel = (1.8 * (speed_target - me.speed)).clamp(-3.0, ACCEL_MAX);
            Control::clamped(accel, steer)
        }
    };
    match *activated_tick {
        None => match cfg.pre_trigger {
            PreTrigger::Hold => {
                if me.speed > 0.05 {
                    Control::clamped(-3.0, 0.0)
                } else {
                    Control::ZERO
                }
            }
            PreTrigger::Cruise => nominal(cfg.cruise_speed),
        },
        Some(t0) => {
            let elapsed = (world.tick.saturating_sub(t0)) as f64 * DT;
            let segment = (elapsed / SEGMENT_SECONDS).floor() as usize;
            let (da, ds) = if segment < PROFILE_SEGMENTS {
                (cfg.profile[segment][0], cfg.profile[segment][1])
            } else {
                (0.0, 0.0)
            };
            let base = nominal(cfg.cruise_speed);
            Control::clamped(base.accel + da, base.steer + ds)
        }
    }
}

// ---------------------------------------------------------------------------
// route analysis
// ---------------------------------------------------------------------------

/// Arc length at which `route` crosses the segment `ab`, if it does.
pub fn crossing_arc(route: &Polyline, a: Vec2, b: Vec2) -> Option<f64> {
    let pts = route.points();
    let mut cum = 0.0;
    for w in pts.windows(2) {
        if segments_intersect(w[0], w[1], a, b) {
            // Locate the intersection parameter on this segment.
            let d = w[1] - w[0];
            let e = b - a;
            let denom = d.cross(e);
            let t = if denom.abs() < 1e-12 {
                0.0
            } else {
                (a - w[0]).cross(e) / denom
            };
            return Some(cum + d.norm() * t.clamp(0.0, 1.0));
        }
        cum += w[0].dist(w[1]);
    }
    None
}

/// First junction along the route: (junction index, entry arc length).
pub fn junction_entry(route: &Polyline, map: &WorldMap) -> Option<(usize, f64)> {
    let step = 0.5;
    let mut s = 0.0;
    while s <= route.len() {
        let p = route.point_at(s);
        for (j, poly) in map.junctions.iter().enumerate() {
            if poly.contains(p) {
                return Some((j, s));
            }
        }
        s += step;
    }
    None
}

/// All stop points (lights, signs, junction entries) along a route, sorted by
/// arc length.
pub fn stops_for_route(route: &Polyline, map: &WorldMap) -> Vec<StopPoint> {
    let mut out = Vec::new();
    for (i, light) in map.lights.iter().enumerate() {
        if let Some(s) = crossing_arc(route, light.stop_line.a, light.stop_line.b) {
            out.push(StopPoint {
                s,
                kind: StopKind::Light(i),
            });
        }
    }
    for (i, sign) in map.stop_signs.iter().enumerate() {
        if let Some(s) = crossing_arc(route, sign.stop_line.a, sign.stop_line.b) {
            out.push(StopPoint {
                s,
                kind: StopKind::Sign(i),
            });
        }
    }
    if let Some((j, s)) = junction_entry(route, map) {
        out.push(StopPoint {
            s,
            kind: StopKind::Junction(j),
        });
    }
    out.sort_by(|a, b| a.s.partial_cmp(&b.s).expect("finite arc"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::step_vehicle;

    #[test]
    fn pure_pursuit_centered_is_straight() {
        let route = Polyline::new(vec![Vec2::ZERO, Vec2::new(100.0, 0.0)]).unwrap();
        let me = VehicleState::car(Vec2::new(10.0, 0.0), 0.0, 8.0);
        assert_eq!(pure_pursuit(&me, &route), 0.0);
        // Offset left: steer right (negative).
        let me = VehicleState::car(Vec2::new(10.0, 1.0), 0.0, 8.0);
        assert!(pure_pursuit(&me, &route) < 0.0);
        // Offset right: steer left.
        let me = VehicleState::car(Vec2::new(10.0, -1.0), 0.0, 8.0);
        assert!(pure_pursuit(&me, &route) > 0.0);
    }

    #[test]
    fn idm_keeps_two_second_headway() {
        // Follow a 5 m/s lead from close behind; the settled gap must be at
        // least 2 seconds of travel.
        let mut v = 5.0f64;
        let mut gap = 4.0f64;
        let lead_speed = 5.0;
        for _ in 0..4000 {
            let a = idm_accel(v, 8.0, Some((gap, lead_speed)));
            let v_next = (v + a * DT).max(0.0);
            gap += (lead_speed - v) * DT;
            v = v_next;
        }
        assert!((v - lead_speed).abs() < 0.1, "speed settles, got {v}");
        assert!(gap >= 2.0 * v, "settled gap {gap:.2} < 2 s headway");
    }

    #[test]
    fn idm_free_road_reaches_target() {
        let mut v = 0.0f64;
        for _ in 0..2000 {
            v = (v + idm_accel(v, 8.0, None) * DT).max(0.0);
        }
        assert!((v - 8.0).abs() < 0.05);
    }

    #[test]
    fn open_loop_profile_matches_direct_integration() {
        // An activated adversary with a zero nominal and a fixed profile must
        // reproduce exact open-loop bicycle integration of that profile.
        let route = Arc::new(Polyline::new(vec![Vec2::ZERO, Vec2::new(200.0, 0.0)]).unwrap());
        let profile = [[0.0, 0.0], [2.0, 0.0], [-3.0, 0.1], [0.0, 0.0]];
        let cfg = AdversaryCfg {
            route,
            cruise_speed: 0.0,
            pre_trigger: PreTrigger::Hold,
            trigger_anchor: Vec2::ZERO,
            trigger_dist: 1e9, // activates immediately
            profile,
            open_loop_nominal: true,
        };
        let world = {
            use crate::sim::map::WorldMap;
            let map = Arc::new(WorldMap {
                lanes: vec![],
                junctions: vec![],
                lights: vec![],
                stop_signs: vec![],
            });
            let route =
                Arc::new(Polyline::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)]).unwrap());
            crate::sim::world::WorldState::new(
                VehicleState::car(Vec2::ZERO, 0.0, 0.0),
                vec![],
                map,
                route,
                3.5,
            )
        };
        let mut sim_state = VehicleState::car(Vec2::new(50.0, 5.0), 0.3, 4.0);
        let mut oracle = sim_state;
        let mut activated = None;
        // 25 s: covers all four segments plus the zero tail.
        for k in 0..500u32 {
            let mut w = world.clone();
            w.tick = k;
            let c = adversary_control(&w, &sim_state, &cfg, &mut activated);
            sim_state = step_vehicle(&sim_state, c, DT).unwrap();

            let elapsed = k as f64 * DT;
            let seg = (elapsed / SEGMENT_SECONDS).floor() as usize;
            let (da, ds) = if seg < PROFILE_SEGMENTS {
                (profile[seg][0], profile[seg][1])
            } else {
                (0.0, 0.0)
            };
            oracle = step_vehicle(&oracle, Control::clamped(da, ds), DT).unwrap();
            assert_eq!(sim_state, oracle, "diverged at tick {k}");
        }
    }

    #[test]
    fn trigger_distance_respected() {
        let route = Arc::new(Polyline::new(vec![Vec2::ZERO, Vec2::new(200.0, 0.0)]).unwrap());
        let cfg = AdversaryCfg {
            route,
            cruise_speed: 5.0,
            pre_trigger: PreTrigger::Hold,
            trigger_anchor: Vec2::new(25.0, 0.0),
            trigger_dist: 15.0,
            profile: [[0.0, 0.0]; 4],
            open_loop_nominal: false,
        };
        let map = Arc::new(crate::sim::map::WorldMap {
            lanes: vec![],
            junctions: vec![],
            lights: vec![],
            stop_signs: vec![],
        });
        let ego_route = Arc::new(Polyline::new(vec![Vec2::ZERO, Vec2::new(200.0, 0.0)]).unwrap());
        let mut world = crate::sim::world::WorldState::new(
            VehicleState::car(Vec2::ZERO, 0.0, 5.0),
            vec![],
            map,
            ego_route,
            3.5,
        );
        let me = VehicleState::cyclist(Vec2::new(25.0, 0.0), 1.5, 0.0);
        let mut activated = None;
        let controls = BTreeMap::new();
        loop {
            adversary_control(&world, &me, &cfg, &mut activated);
            if activated.is_some() {
                break;
            }
            world.step(Control::ZERO, &controls).unwrap();
            assert!(world.tick < 1200, "never triggered");
        }
        // Fired exactly when ego entered the 15 m ball around the anchor.
        assert!(world.ego.pos().dist(Vec2::new(25.0, 0.0)) <= 15.0 + 0.3);
        assert!(world.ego.x >= 9.5);
    }
}
