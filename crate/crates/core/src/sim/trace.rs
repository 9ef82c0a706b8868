//! Episode traces: a line-delimited, schema-versioned log of one rollout.
//!
//! The first line is a header document with the schema version and scenario
//! identity; each following line is one tick. Floats round-trip exactly
//! (shortest-representation encoding), so a trace written and re-read replays
//! bit-identically.

use super::world::{ActorKind, Event, WorldState};
use super::{Control, PedalAction};
use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

pub const TRACE_SCHEMA: &str = "trace/v1";

/// Header line: identifies the scenario and the run that produced the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub schema: String,
    pub dt: f64,
    pub template_id: u8,
    pub route_id: u8,
    pub generator_id: String,
    pub agent: String,
    pub seed: u64,
    /// Named scenario parameters (sorted by name).
    pub params: BTreeMap<String, f64>,
}

/// Pose snapshot of one body.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyRecord {
    pub id: u32,
    pub kind: ActorKind,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

/// Ego command for one tick, in both acceleration and pedal form.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub accel: f64,
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl ControlRecord {
    pub fn from_control(c: Control) -> Self {
        let PedalAction {
            throttle, brake, ..
        } = super::control_from_action(c.accel, c.steer);
        ControlRecord {
            accel: c.accel,
            steer: c.steer,
            throttle,
            brake,
        }
    }
}

/// One tick: post-step state, the control that was applied to reach it is the
/// previous record's; `control` here is the command chosen *at* this state
/// (zero on the terminal record).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u32,
    pub ego: BodyRecord,
    pub actors: Vec<BodyRecord>,
    pub control: ControlRecord,
    pub events: Vec<Event>,
}

impl TraceRecord {
    pub fn capture(world: &WorldState, control: Control, events: Vec<Event>) -> Self {
        TraceRecord {
            tick: world.tick,
            ego: BodyRecord {
                id: 0,
                kind: ActorKind::Vehicle,
                x: world.ego.x,
                y: world.ego.y,
                heading: world.ego.heading,
                speed: world.ego.speed,
            },
            actors: world
                .actors
                .iter()
                .map(|a| BodyRecord {
                    id: a.id,
                    kind: a.kind,
                    x: a.state.x,
                    y: a.state.y,
                    heading: a.state.heading,
                    speed: a.state.speed,
                })
                .collect(),
            control: ControlRecord::from_control(control),
            events,
        }
    }
}

/// A complete episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl EpisodeTrace {
    /// All events of the episode in tick order.
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.records.iter().flat_map(|r| r.events.iter())
    }

    /// Number of simulated ticks (records minus the initial state).
    pub fn ticks(&self) -> u32 {
        self.records.last().map(|r| r.tick).unwrap_or(0)
    }

    /// Serialize as line-delimited JSON: header line, then one line per tick.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.meta)?;
        w.write_all(b"\n")?;
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parse a trace written by [`EpisodeTrace::write_jsonl`]. A schema-version
    /// mismatch is reported with both versions.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let bad_line = |n: usize, e: serde_json::Error| CoreError::Artifact {
            path: "<trace>".into(),
            reason: format!("line {n}: {e}"),
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::Artifact {
                path: "<trace>".into(),
                reason: "empty file".into(),
            })??;
        let meta: TraceMeta = serde_json::from_str(&header).map_err(|e| bad_line(1, e))?;
        if meta.schema != TRACE_SCHEMA {
            return Err(CoreError::Schema {
                found: meta.schema,
                expected: TRACE_SCHEMA.into(),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| bad_line(i + 2, e))?);
        }
        Ok(EpisodeTrace { meta, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::EventKind;

    fn tiny_trace() -> EpisodeTrace {
        EpisodeTrace {
            meta: TraceMeta {
                schema: TRACE_SCHEMA.into(),
                dt: 0.05,
                template_id: 1,
                route_id: 0,
                generator_id: "random".into(),
                agent: "rule_based".into(),
                seed: 42,
                params: [("spawn_dist".to_string(), 25.0)].into(),
            },
            records: vec![TraceRecord {
                tick: 0,
                ego: BodyRecord {
                    id: 0,
                    kind: ActorKind::Vehicle,
                    x: 0.1,
                    y: -0.25,
                    heading: 0.0,
                    speed: 7.3,
                },
                actors: vec![],
                control: ControlRecord {
                    accel: 1.5,
                    steer: 0.0,
                    throttle: 0.5,
                    brake: 0.0,
                },
                events: vec![Event {
                    tick: 0,
                    kind: EventKind::Collision { actor: 3 },
                }],
            }],
        }
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let trace = tiny_trace();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let back = EpisodeTrace::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, trace);
        // Re-serialization is byte-identical.
        let mut buf2 = Vec::new();
        back.write_jsonl(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn schema_mismatch_reports_both_versions() {
        let mut trace = tiny_trace();
        trace.meta.schema = "trace/v0".into();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let err = EpisodeTrace::read_jsonl(&buf[..]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("trace/v0") && msg.contains(TRACE_SCHEMA), "{msg}");
    }

    #[test]
    fn corrupt_line_is_named_in_the_error() {
        let trace = tiny_trace();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{not json}\n");
        let err = EpisodeTrace::read_jsonl(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn event_json_shape() {
        let e = Event {
            tick: 212,
            kind: EventKind::Collision { actor: 1 },
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"tick":212,"kind":"collision","actor":1}"#);
    }
}
