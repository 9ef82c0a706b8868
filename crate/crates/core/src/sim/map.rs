//! Static world description: lanes, junctions, traffic lights, stop signs.

use crate::geom::{Polygon, Polyline, Vec2};
use serde::{Deserialize, Serialize};

/// One lane: a centerline polyline with a width and a speed limit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lane {
    pub id: u32,
    pub center: Polyline,
    pub width: f64,
    pub speed_limit: f64,
}

/// A stop line painted across a lane, given as a segment.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct StopLine {
    pub a: Vec2,
    pub b: Vec2,
}

impl StopLine {
    pub fn midpoint(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightPhase {
    Green,
    Yellow,
    Red,
}

/// Fixed-schedule signal head guarding one stop line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrafficLight {
    pub stop_line: StopLine,
    /// Durations (s) of the green, yellow, red phases, in that order.
    pub schedule: [f64; 3],
    /// Phase active at t = 0, entered at the start of its window.
    pub initial: LightPhase,
}

impl TrafficLight {
    /// Phase at absolute time `t` (s), cycling green -> yellow -> red.
    pub fn phase_at(&self, t: f64) -> LightPhase {
        let order = [LightPhase::Green, LightPhase::Yellow, LightPhase::Red];
        let start = order.iter().position(|p| *p == self.initial).unwrap();
        let cycle: f64 = self.schedule.iter().sum();
        let mut rem = t.rem_euclid(cycle);
        let mut k = start;
        loop {
            let dur = match order[k] {
                LightPhase::Green => self.schedule[0],
                LightPhase::Yellow => self.schedule[1],
                LightPhase::Red => self.schedule[2],
            };
            if rem < dur {
                return order[k];
            }
            rem -= dur;
            k = (k + 1) % 3;
        }
    }
}

/// Unsignalized stop line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StopSign {
    pub stop_line: StopLine,
}

/// Immutable scene: the drivable area is the union of lane corridors and
/// junction polygons.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldMap {
    pub lanes: Vec<Lane>,
    pub junctions: Vec<Polygon>,
    pub lights: Vec<TrafficLight>,
    pub stop_signs: Vec<StopSign>,
}

impl WorldMap {
    /// Whether `p` lies on the road (any lane corridor or junction polygon).
    pub fn contains(&self, p: Vec2) -> bool {
        self.lanes
            .iter()
            .any(|l| l.center.project(p).distance <= l.width * 0.5)
            || self.junctions.iter().any(|j| j.contains(p))
    }

    /// Distance from `p` to the drivable area (0 when inside).
    pub fn excursion(&self, p: Vec2) -> f64 {
        let mut best = f64::INFINITY;
        for l in &self.lanes {
            best = best.min((l.center.project(p).distance - l.width * 0.5).max(0.0));
        }
        for j in &self.junctions {
            best = best.min(j.distance(p));
        }
        best
    }

    /// Nearest lane to `p` by centerline distance, if any lane exists.
    pub fn nearest_lane(&self, p: Vec2) -> Option<(&Lane, f64)> {
        self.lanes
            .iter()
            .map(|l| (l, l.center.project(p).distance))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distance"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_lane(y: f64) -> Lane {
        Lane {
            id: 0,
            center: Polyline::new(vec![Vec2::new(0.0, y), Vec2::new(100.0, y)]).unwrap(),
            width: 3.5,
            speed_limit: 8.0,
        }
    }

    #[test]
    fn light_schedule_cycles() {
        let tl = TrafficLight {
            stop_line: StopLine {
                a: Vec2::ZERO,
                b: Vec2::new(0.0, 3.5),
            },
            schedule: [10.0, 3.0, 10.0],
            initial: LightPhase::Green,
        };
        assert_eq!(tl.phase_at(0.0), LightPhase::Green);
        assert_eq!(tl.phase_at(9.99), LightPhase::Green);
        assert_eq!(tl.phase_at(10.0), LightPhase::Yellow);
        assert_eq!(tl.phase_at(12.99), LightPhase::Yellow);
        assert_eq!(tl.phase_at(13.0), LightPhase::Red);
        assert_eq!(tl.phase_at(22.99), LightPhase::Red);
        assert_eq!(tl.phase_at(23.0), LightPhase::Green);

        let tl_red = TrafficLight {
            initial: LightPhase::Red,
            ..tl
        };
        assert_eq!(tl_red.phase_at(0.0), LightPhase::Red);
        assert_eq!(tl_red.phase_at(10.0), LightPhase::Green);
    }

    #[test]
    fn containment_and_excursion() {
        let map = WorldMap {
            lanes: vec![straight_lane(0.0)],
            junctions: vec![],
            lights: vec![],
            stop_signs: vec![],
        };
        assert!(map.contains(Vec2::new(50.0, 1.74)));
        assert!(!map.contains(Vec2::new(50.0, 1.76)));
        assert!((map.excursion(Vec2::new(50.0, 4.75)) - 3.0).abs() < 1e-12);
        assert_eq!(map.excursion(Vec2::new(50.0, 0.5)), 0.0);
    }
}
