//! Episode execution: drive a scenario instance to termination, producing a
//! trace and summary facts about the run.

use crate::error::Result;
use crate::scenario::behavior::{actor_controls, Behavior};
use crate::scenario::{template, ScenarioInstance};
use crate::sim::trace::{EpisodeTrace, TraceMeta, TraceRecord, TRACE_SCHEMA};
use crate::sim::world::{Event, EventKind, WorldState};
use crate::sim::{Control, DT, MAX_TICKS};
use serde::{Deserialize, Serialize};

/// Route deviation (m) beyond which the episode aborts as off-course.
pub const OFF_COURSE_DEVIATION: f64 = 10.0;

/// Why an episode ended.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Collision,
    RouteComplete,
    OffCourse,
    Timeout,
}

/// A finished episode.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub trace: EpisodeTrace,
    pub termination: Termination,
    pub collided: bool,
    /// Closest center-to-center approach between ego and the adversary over
    /// the whole episode (m); `None` when the scene has no adversary.
    pub min_adversary_distance: Option<f64>,
}

/// Advance the world one tick: script every actor against the pre-step state,
/// then integrate. Returns the events that fired.
pub fn advance(
    world: &mut WorldState,
    behaviors: &mut [Behavior],
    ego: Control,
) -> Result<Vec<Event>> {
    let controls = actor_controls(world, behaviors);
    world.step(ego, &controls)
}

/// Run an instance to termination. `ego_fn` picks the ego control at each
/// pre-step state; `agent_label` and `seed` are recorded in the trace header.
pub fn run_episode<F>(
    instance: ScenarioInstance,
    agent_label: &str,
    seed: u64,
    mut ego_fn: F,
) -> Result<Rollout>
where
    F: FnMut(&WorldState) -> Result<Control>,
{
    let ScenarioInstance {
        spec,
        mut world,
        mut behaviors,
        adversary_id,
        ..
    } = instance;
    let def = template(spec.template_id)?;
    let meta = TraceMeta {
        schema: TRACE_SCHEMA.to_string(),
        dt: DT,
        template_id: spec.template_id,
        route_id: spec.route_id,
        generator_id: spec.generator.name().to_string(),
        agent: agent_label.to_string(),
        seed,
        params: def
            .params
            .iter()
            .zip(&spec.params)
            .map(|(pd, v)| (pd.name.to_string(), *v))
            .collect(),
    };

    let adversary_distance = |world: &WorldState| -> Option<f64> {
        let id = adversary_id?;
        let adv = world.actor(id)?;
        Some(world.ego.pos().dist(adv.state.pos()))
    };

    let mut records: Vec<TraceRecord> = Vec::new();
    let mut pending: Vec<Event> = Vec::new();
    let mut collided = false;
    let mut min_d = adversary_distance(&world);

    let termination = loop {
        let collision_now = pending
            .iter()
            .any(|e| matches!(e.kind, EventKind::Collision { .. }));
        collided |= collision_now;
        let done = if collision_now {
            Some(Termination::Collision)
        } else if world.route_complete() {
            Some(Termination::RouteComplete)
        } else if world.route.project(world.ego.pos()).distance > OFF_COURSE_DEVIATION {
            Some(Termination::OffCourse)
        } else if world.tick >= MAX_TICKS {
            Some(Termination::Timeout)
        } else {
            None
        };
        if let Some(t) = done {
            records.push(TraceRecord::capture(&world, Control::ZERO, pending));
            break t;
        }

        let control = ego_fn(&world)?;
        records.push(TraceRecord::capture(&world, control, pending));
        pending = advance(&mut world, &mut behaviors, control)?;
        if let (Some(best), Some(d)) = (min_d.as_mut(), adversary_distance(&world)) {
            *best = best.min(d);
        }
    };

    Ok(Rollout {
        trace: EpisodeTrace { meta, records },
        termination,
        collided,
        min_adversary_distance: min_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{instantiate, GeneratorId, ScenarioSpec};
    use crate::sim::world::EventKind;

    fn benign_instance(template_id: u8, route_id: u8) -> ScenarioInstance {
        let spec = ScenarioSpec::benign(template_id, route_id).unwrap();
        instantiate(&spec).unwrap()
    }

    #[test]
    fn zero_control_ego_times_out_or_drifts() {
        // Ego that never accelerates decelerates nothing and coasts at the
        // start speed; on a straight road it must either finish or time out,
        // never collide in the benign world.
        let inst = benign_instance(1, 0);
        let r = run_episode(inst, "coast", 0, |_| Ok(Control::ZERO)).unwrap();
        assert!(!r.collided);
        assert!(matches!(
            r.termination,
            Termination::RouteComplete | Termination::Timeout
        ));
    }

    #[test]
    fn trace_layout_matches_convention() {
        let inst = benign_instance(1, 0);
        let r = run_episode(inst, "coast", 7, |_| Ok(Control::ZERO)).unwrap();
        let recs = &r.trace.records;
        assert_eq!(recs[0].tick, 0, "first record is the initial state");
        for (k, rec) in recs.iter().enumerate() {
            assert_eq!(rec.tick as usize, k);
        }
        let last = recs.last().unwrap();
        assert_eq!(last.control.accel, 0.0);
        assert_eq!(last.control.steer, 0.0);
        assert_eq!(r.trace.meta.agent, "coast");
        assert_eq!(r.trace.meta.seed, 7);
        assert_eq!(r.trace.meta.generator_id, "benign");
        assert_eq!(r.trace.ticks() as usize, recs.len() - 1);
    }

    #[test]
    fn runaway_steering_aborts_off_course() {
        let inst = benign_instance(1, 0);
        let r = run_episode(inst, "swerve", 0, |_| Ok(Control::clamped(1.0, 0.3))).unwrap();
        assert_eq!(r.termination, Termination::OffCourse);
        // Off-course ends promptly: the route corridor is left within a few
        // seconds of full-lock steering.
        assert!(r.trace.ticks() < 400, "took {} ticks", r.trace.ticks());
    }

    #[test]
    fn crossing_adversary_strikes_full_throttle_ego() {
        // Template 1 with staging chosen so a full-speed ego meets the
        // crossing cyclist: spawn well ahead, wide trigger, matched timing.
        let mut spec = ScenarioSpec::benign(1, 0).unwrap();
        spec.generator = GeneratorId::Random;
        spec.params = vec![30.0, 2.0, 20.0, 2.5];
        let inst = instantiate(&spec).unwrap();
        let r = run_episode(inst, "floor_it", 0, |_| Ok(Control::clamped(3.0, 0.0))).unwrap();
        // Whether or not this exact staging collides, the adversary must have
        // moved (trigger fired) and the minimum distance must be recorded.
        let d = r.min_adversary_distance.expect("adversary present");
        assert!(d < 25.0, "adversary never approached: min distance {d}");
        let triggered = r
            .trace
            .records
            .iter()
            .any(|rec| rec.actors[0].speed > 0.1);
        assert!(triggered, "adversary never launched");
    }

    #[test]
    fn benign_junction_run_is_collision_free() {
        for t in [5u8, 6, 7, 8] {
            let inst = benign_instance(t, 0);
            let cfg = inst.ego_autopilot.clone();
            let r = run_episode(inst, "rule", 0, |w| {
                Ok(crate::scenario::behavior::autopilot_control(
                    w, &w.ego, None, &cfg,
                ))
            })
            .unwrap();
            assert!(!r.collided, "template {t} benign collision");
            assert_eq!(
                r.termination,
                Termination::RouteComplete,
                "template {t}: {:?}",
                r.termination
            );
        }
    }

    #[test]
    fn collision_terminates_episode_at_event_tick() {
        // A full-throttle ego holding a slight rightward arc (~500 m radius)
        // drifts off its lane and plows into the car parked on the shoulder
        // of the passing template: a guaranteed, deterministic collision.
        let mut spec = ScenarioSpec::benign(4, 0).unwrap();
        spec.generator = GeneratorId::Random;
        let inst = instantiate(&spec).unwrap();
        let r = run_episode(inst, "ram", 0, |_| Ok(Control::clamped(3.0, -0.006))).unwrap();
        assert_eq!(r.termination, Termination::Collision);
        assert!(r.collided);
        let last = r.trace.records.last().unwrap();
        assert!(last
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Collision { .. })));
        assert_eq!(last.tick, r.trace.ticks());
    }
}
