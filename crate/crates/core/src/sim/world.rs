//! Mutable episode state and the world stepping function with event sensing.

use super::map::{LightPhase, WorldMap};
use super::{step_vehicle, Control, VehicleState, DT};
use crate::error::{CoreError, Result};
use crate::geom::{obb_overlap, segments_intersect, wrap_angle, Polyline, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub type ActorId = u32;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Vehicle,
    Cyclist,
    Pedestrian,
}

/// A non-ego road user. `behavior` is an opaque handle resolved by the layer
/// that drives actors (scenario behaviors); the simulator itself only needs
/// the physical state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub kind: ActorKind,
    pub state: VehicleState,
    pub behavior: u32,
}

/// Something noteworthy that happened during one step, stamped with the tick
/// at which the post-step state exhibits it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Ego footprint overlaps an actor footprint. Fired once per contiguous
    /// contact with each actor.
    Collision { actor: ActorId },
    /// Ego crossed a stop line governed by a light while the light was red.
    RedLightRun,
    /// Ego crossed a stop-sign line without having come to a near-stop in the
    /// approach zone.
    StopSignRun,
    /// Ego center left the drivable area.
    OutOfRoadEnter,
    /// Ego center returned to the drivable area.
    OutOfRoadExit,
    /// Ego left its route's lane corridor (fired once per excursion; the
    /// matching out-of-road events fire only if the crossed boundary is a
    /// road edge).
    LaneInvasion,
    /// Ego reached the end of its route.
    RouteComplete,
}

/// Minimum-speed bookkeeping for one stop line (signs need "did we actually
/// stop on approach", lights only need crossing detection).
#[derive(Clone, Debug, Default)]
struct SignApproach {
    in_zone: bool,
    min_speed: f64,
}

/// Distance from a stop line within which approach speed is tracked.
const STOP_APPROACH_ZONE: f64 = 10.0;
/// Speed below which the vehicle counts as stopped at a sign.
const STOP_SPEED: f64 = 0.5;
/// Route progress at which the route counts as complete.
const ROUTE_DONE_FRACTION: f64 = 0.999;

/// Full mutable state of one episode.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub tick: u32,
    pub ego: VehicleState,
    pub actors: Vec<Actor>,
    pub map: Arc<WorldMap>,
    /// The ego's reference route.
    pub route: Arc<Polyline>,
    /// Width of the ego's lane, used for the lane-invasion boundary and the
    /// front-vehicle corridor.
    pub lane_width: f64,
    /// Yaw rate realized over the last step (rad/s), 0 at tick 0.
    pub ego_yaw_rate: f64,
    /// Every event fired so far, in order.
    pub events: Vec<Event>,
    /// Monotone maximum of route progress reached so far, in [0, 1].
    pub progress_max: f64,

    in_contact: BTreeSet<ActorId>,
    out_of_road: bool,
    out_of_lane: bool,
    route_done: bool,
    sign_state: Vec<SignApproach>,
}

impl WorldState {
    pub fn new(
        ego: VehicleState,
        actors: Vec<Actor>,
        map: Arc<WorldMap>,
        route: Arc<Polyline>,
        lane_width: f64,
    ) -> Self {
        let pos = ego.pos();
        let out_of_road = !map.contains(pos);
        let out_of_lane = route.project(pos).distance > lane_width * 0.5;
        let progress = route.project(pos).s / route.len();
        let sign_state = map
            .stop_signs
            .iter()
            .map(|_| SignApproach {
                in_zone: false,
                min_speed: f64::INFINITY,
            })
            .collect();
        WorldState {
            tick: 0,
            ego,
            actors,
            map,
            route,
            lane_width,
            ego_yaw_rate: 0.0,
            events: Vec::new(),
            progress_max: progress,
            in_contact: BTreeSet::new(),
            out_of_road,
            out_of_lane,
            route_done: false,
            sign_state,
        }
    }

    /// Simulation time (s) of the current state.
    pub fn time(&self) -> f64 {
        self.tick as f64 * DT
    }

    pub fn actor(&self, id: ActorId) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    /// Whether the ego has completed its route.
    pub fn route_complete(&self) -> bool {
        self.route_done
    }

    /// Whether any actor sits in the 20 m x lane-width corridor directly
    /// ahead of the ego.
    pub fn front_vehicle(&self) -> bool {
        let fwd = Vec2::from_angle(self.ego.heading);
        let left = fwd.perp();
        let half_w = self.lane_width * 0.5;
        self.actors.iter().any(|a| {
            let rel = a.state.pos() - self.ego.pos();
            let x = rel.dot(fwd);
            let y = rel.dot(left);
            x > 0.0 && x <= 20.0 && y.abs() <= half_w
        })
    }

    /// Signed lateral deviation of the ego from its route: positive left of
    /// the direction of travel.
    pub fn signed_deviation(&self) -> f64 {
        let pr = self.route.project(self.ego.pos());
        pr.distance * pr.side
    }

    /// Whether the ego is currently outside its lane corridor.
    pub fn out_of_lane(&self) -> bool {
        self.out_of_lane
    }

    /// Whether the ego is currently off the drivable area.
    pub fn out_of_road(&self) -> bool {
        self.out_of_road
    }

    /// Whether the ego satisfied stop sign `idx` on the current approach
    /// (came below walking speed inside the approach zone).
    pub fn stop_satisfied(&self, idx: usize) -> bool {
        self.sign_state
            .get(idx)
            .map(|s| s.min_speed <= STOP_SPEED)
            .unwrap_or(true)
    }

    /// Advance the world by one tick. `actor_controls` must contain an entry
    /// for every actor. Returns the events fired during this step (also
    /// appended to `self.events`).
    pub fn step(
        &mut self,
        ego_control: Control,
        actor_controls: &BTreeMap<ActorId, Control>,
    ) -> Result<Vec<Event>> {
        if !ego_control.in_bounds() {
            return Err(CoreError::NonFinite("ego control out of bounds"));
        }
        let prev_pos = self.ego.pos();
        let prev_heading = self.ego.heading;
        let t_before = self.time();

        // Integrate everyone with the controls chosen against the pre-step state.
        self.ego = step_vehicle(&self.ego, ego_control, DT)?;
        for actor in &mut self.actors {
            let c = actor_controls
                .get(&actor.id)
                .copied()
                .ok_or_else(|| CoreError::InvalidSpec(format!("missing control for actor {}", actor.id)))?;
            if !c.in_bounds() {
                return Err(CoreError::NonFinite("actor control out of bounds"));
            }
            actor.state = step_vehicle(&actor.state, c, DT)?;
        }
        self.tick += 1;
        self.ego_yaw_rate = wrap_angle(self.ego.heading - prev_heading) / DT;

        let mut fired = Vec::new();
        let tick = self.tick;
        let pos = self.ego.pos();

        // Collisions, one event per contiguous contact per actor.
        let ego_box = self.ego.obb();
        for actor in &self.actors {
            if obb_overlap(&ego_box, &actor.state.obb()) {
                if self.in_contact.insert(actor.id) {
                    fired.push(Event {
                        tick,
                        kind: EventKind::Collision { actor: actor.id },
                    });
                }
            } else {
                self.in_contact.remove(&actor.id);
            }
        }

        // Red-light running: crossing a governed stop line while it shows red.
        for light in &self.map.lights {
            if segments_intersect(prev_pos, pos, light.stop_line.a, light.stop_line.b)
                && light.phase_at(t_before) == LightPhase::Red
            {
                fired.push(Event {
                    tick,
                    kind: EventKind::RedLightRun,
                });
            }
        }

        // Stop signs: must have dropped to walking speed inside the approach zone.
        for (idx, sign) in self.map.stop_signs.iter().enumerate() {
            let st = &mut self.sign_state[idx];
            let dist = pos.dist(sign.stop_line.midpoint());
            if dist <= STOP_APPROACH_ZONE {
                if !st.in_zone {
                    st.in_zone = true;
                    st.min_speed = self.ego.speed;
                } else {
                    st.min_speed = st.min_speed.min(self.ego.speed);
                }
            }
            if segments_intersect(prev_pos, pos, sign.stop_line.a, sign.stop_line.b) {
                if st.in_zone && st.min_speed > STOP_SPEED {
                    fired.push(Event {
                        tick,
                        kind: EventKind::StopSignRun,
                    });
                }
                st.in_zone = false;
                st.min_speed = f64::INFINITY;
            }
        }

        // Road-edge excursions (edge-triggered both ways).
        let off_road_now = !self.map.contains(pos);
        if off_road_now && !self.out_of_road {
            fired.push(Event {
                tick,
                kind: EventKind::OutOfRoadEnter,
            });
        } else if !off_road_now && self.out_of_road {
            fired.push(Event {
                tick,
                kind: EventKind::OutOfRoadExit,
            });
        }
        self.out_of_road = off_road_now;

        // Lane invasion: leaving the route's lane corridor, once per excursion.
        let projection = self.route.project(pos);
        let out_of_lane_now = projection.distance > self.lane_width * 0.5;
        if out_of_lane_now && !self.out_of_lane {
            fired.push(Event {
                tick,
                kind: EventKind::LaneInvasion,
            });
        }
        self.out_of_lane = out_of_lane_now;

        // Route completion by arc-length fraction, monotone over the episode.
        self.progress_max = self.progress_max.max(projection.s / self.route.len());
        if !self.route_done && self.progress_max >= ROUTE_DONE_FRACTION {
            self.route_done = true;
            fired.push(Event {
                tick,
                kind: EventKind::RouteComplete,
            });
        }

        self.events.extend(fired.iter().cloned());
        Ok(fired)
    }
}

/// Unsigned distance from `p` to the route polyline.
pub fn lateral_deviation(p: Vec2, route: &Polyline) -> f64 {
    route.project(p).distance
}

/// Fraction of the route's arc length reached by the projection of `p`.
pub fn route_progress(p: Vec2, route: &Polyline) -> f64 {
    route.project(p).s / route.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::map::{StopLine, StopSign, TrafficLight};

    fn straight_map() -> Arc<WorldMap> {
        Arc::new(WorldMap {
            lanes: vec![crate::sim::map::Lane {
                id: 0,
                center: Polyline::new(vec![Vec2::new(-20.0, 0.0), Vec2::new(200.0, 0.0)]).unwrap(),
                width: 3.5,
                speed_limit: 8.0,
            }],
            junctions: vec![],
            lights: vec![],
            stop_signs: vec![],
        })
    }

    fn straight_route() -> Arc<Polyline> {
        Arc::new(Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(100.0, 0.0)]).unwrap())
    }

    fn world_with(actors: Vec<Actor>, map: Arc<WorldMap>) -> WorldState {
        let ego = VehicleState::car(Vec2::ZERO, 0.0, 0.0);
        WorldState::new(ego, actors, map, straight_route(), 3.5)
    }

    #[test]
    fn collision_fires_once_per_contact() {
        // An actor parked overlapping the ego: exactly one collision event, even
        // over many ticks of sustained contact.
        let actor = Actor {
            id: 1,
            kind: ActorKind::Vehicle,
            state: VehicleState::car(Vec2::new(1.0, 0.0), 0.0, 0.0),
            behavior: 0,
        };
        let mut w = world_with(vec![actor], straight_map());
        let controls: BTreeMap<ActorId, Control> = [(1, Control::ZERO)].into();
        let mut collisions = 0;
        for _ in 0..10 {
            let fired = w.step(Control::ZERO, &controls).unwrap();
            collisions += fired
                .iter()
                .filter(|e| matches!(e.kind, EventKind::Collision { .. }))
                .count();
        }
        assert_eq!(collisions, 1);
    }

    #[test]
    fn red_light_run_detected() {
        let mut map = (*straight_map()).clone();
        map.lights.push(TrafficLight {
            stop_line: StopLine {
                a: Vec2::new(10.0, -1.75),
                b: Vec2::new(10.0, 1.75),
            },
            schedule: [10.0, 3.0, 10.0],
            initial: LightPhase::Red,
        });
        let mut w = world_with(vec![], Arc::new(map));
        w.ego.speed = 8.0;
        let controls = BTreeMap::new();
        let mut runs = 0;
        for _ in 0..60 {
            let fired = w.step(Control::ZERO, &controls).unwrap();
            runs += fired
                .iter()
                .filter(|e| e.kind == EventKind::RedLightRun)
                .count();
        }
        assert_eq!(runs, 1);
    }

    #[test]
    fn green_light_not_flagged() {
        let mut map = (*straight_map()).clone();
        map.lights.push(TrafficLight {
            stop_line: StopLine {
                a: Vec2::new(10.0, -1.75),
                b: Vec2::new(10.0, 1.75),
            },
            schedule: [10.0, 3.0, 10.0],
            initial: LightPhase::Green,
        });
        let mut w = world_with(vec![], Arc::new(map));
        w.ego.speed = 8.0;
        let controls = BTreeMap::new();
        for _ in 0..60 {
            let fired = w.step(Control::ZERO, &controls).unwrap();
            assert!(fired.iter().all(|e| e.kind != EventKind::RedLightRun));
        }
    }

    #[test]
    fn stop_sign_run_and_satisfied() {
        let mk = || {
            let mut map = (*straight_map()).clone();
            map.stop_signs.push(StopSign {
                stop_line: StopLine {
                    a: Vec2::new(30.0, -1.75),
                    b: Vec2::new(30.0, 1.75),
                },
            });
            world_with(vec![], Arc::new(map))
        };
        let controls = BTreeMap::new();

        // Blowing through at 8 m/s: one violation.
        let mut w = mk();
        w.ego.speed = 8.0;
        let mut runs = 0;
        for _ in 0..120 {
            runs += w
                .step(Control::ZERO, &controls)
                .unwrap()
                .iter()
                .filter(|e| e.kind == EventKind::StopSignRun)
                .count();
        }
        assert_eq!(runs, 1);

        // Braking to a stop inside the zone, then proceeding: no violation.
        let mut w = mk();
        w.ego.speed = 6.0;
        let mut stopped = false;
        for _ in 0..400 {
            let cmd = if !stopped && w.ego.x > 16.0 {
                if w.ego.speed == 0.0 {
                    stopped = true;
                }
                Control::clamped(-6.0, 0.0)
            } else {
                Control::clamped(1.5, 0.0)
            };
            let fired = w.step(cmd, &controls).unwrap();
            assert!(fired.iter().all(|e| e.kind != EventKind::StopSignRun));
            if w.ego.x > 40.0 {
                break;
            }
        }
        assert!(stopped);
    }

    #[test]
    fn lane_excursion_events() {
        // Drive diagonally off the lane and back: one lane invasion, paired
        // out-of-road events only when the road edge is actually crossed.
        let mut w = world_with(vec![], straight_map());
        w.ego.speed = 8.0;
        let controls = BTreeMap::new();
        // Steer left out of the lane (lane is 3.5 wide; road edge at 1.75).
        let mut invasions = 0;
        let mut enters = 0;
        let mut exits = 0;
        for k in 0..200 {
            let steer = if k < 40 { 0.2 } else { -0.2 };
            let fired = w.step(Control::clamped(0.0, steer), &controls).unwrap();
            for e in &fired {
                match e.kind {
                    EventKind::LaneInvasion => invasions += 1,
                    EventKind::OutOfRoadEnter => enters += 1,
                    EventKind::OutOfRoadExit => exits += 1,
                    _ => {}
                }
            }
            if k > 40 && !w.out_of_lane() {
                break;
            }
        }
        assert_eq!(invasions, 1);
        assert_eq!(enters, 1);
        assert_eq!(exits, 1);
    }

    #[test]
    fn route_complete_timing() {
        // 100 m straight route at a constant 10 m/s completes at t = 10 +- dt.
        let mut w = world_with(vec![], straight_map());
        w.ego.speed = 10.0;
        let controls = BTreeMap::new();
        let mut done_at = None;
        for _ in 0..1200 {
            let fired = w.step(Control::ZERO, &controls).unwrap();
            if fired.iter().any(|e| e.kind == EventKind::RouteComplete) {
                done_at = Some(w.time());
                break;
            }
        }
        let t = done_at.expect("route completes");
        assert!((t - 10.0).abs() <= DT + 1e-9, "completed at {t}");
        assert!(w.progress_max >= 0.999);
    }

    #[test]
    fn missing_actor_control_rejected() {
        let actor = Actor {
            id: 7,
            kind: ActorKind::Vehicle,
            state: VehicleState::car(Vec2::new(30.0, 0.0), 0.0, 0.0),
            behavior: 0,
        };
        let mut w = world_with(vec![actor], straight_map());
        let err = w.step(Control::ZERO, &BTreeMap::new());
        assert!(err.is_err());
    }

    #[test]
    fn front_vehicle_corridor() {
        let mk_actor = |p: Vec2| Actor {
            id: 1,
            kind: ActorKind::Vehicle,
            state: VehicleState::car(p, 0.0, 0.0),
            behavior: 0,
        };
        let w = world_with(vec![mk_actor(Vec2::new(12.0, 0.5))], straight_map());
        assert!(w.front_vehicle());
        let w = world_with(vec![mk_actor(Vec2::new(21.0, 0.0))], straight_map());
        assert!(!w.front_vehicle());
        let w = world_with(vec![mk_actor(Vec2::new(12.0, 2.5))], straight_map());
        assert!(!w.front_vehicle());
        let w = world_with(vec![mk_actor(Vec2::new(-5.0, 0.0))], straight_map());
        assert!(!w.front_vehicle());
    }
}
