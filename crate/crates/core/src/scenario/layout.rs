//! Procedural road layouts: one per (template, route) pair.
//!
//! Each template family has a fixed topology (straight multi-lane road,
//! two-way road, or a signalized/unsignalized junction) and ten route
//! variants that vary lane width, lane count, speed limit, approach length,
//! turn direction, and signage. Layouts are deterministic pure functions of
//! the (template, route) pair and are cached behind `Arc`s.

use crate::error::{CoreError, Result};
use crate::geom::{Polygon, Polyline, Vec2};
use crate::sim::map::{Lane, LightPhase, StopLine, StopSign, TrafficLight, WorldMap};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex, OnceLock};

pub const TEMPLATE_COUNT: u8 = 8;
pub const ROUTE_COUNT: u8 = 10;

/// Half-size of the square drivable patch at a junction. Large enough to
/// cover two-lane crossings and the swept path of turning routes.
pub const JUNCTION_HALF: f64 = 11.0;
/// Stop lines (lights and signs) sit this far before the junction center.
const STOP_LINE_BACK: f64 = JUNCTION_HALF + 1.0;
/// Traffic-light phase durations (green, yellow, red) in seconds.
const LIGHT_SCHEDULE: [f64; 3] = [10.0, 3.0, 10.0];
/// Turn arcs start this far before the junction center. The resulting arc
/// radius (lane half-width + setback + 0.25) must sit well above the
/// full-lock turning circle (~9.9 m) so a learned controller has steering
/// margin while tracking the curve.
const TURN_SETBACK: f64 = 14.0;

/// Static geometry and reference paths for one (template, route) pair.
#[derive(Clone, Debug)]
pub struct Layout {
    pub template_id: u8,
    pub route_id: u8,
    pub map: Arc<WorldMap>,
    /// Ego reference route (start to goal).
    pub route: Arc<Polyline>,
    pub lane_width: f64,
    pub speed_limit: f64,
    pub ego_start_speed: f64,
    /// Junction center for junction templates; the trigger anchor for
    /// templates whose anchor is not derived from parameters.
    pub conflict: Vec2,
    /// Adversary nominal path (vehicle-adversary templates only).
    pub adv_route: Option<Arc<Polyline>>,
    /// Arc length of the conflict point along `adv_route`.
    pub adv_conflict_s: f64,
    /// Arc length of the ego start projected onto `adv_route` (used by
    /// templates that measure the initial gap along the ego's own lane).
    pub adv_base_s: f64,
    /// Adjacent-lane path for the scripted neighbor vehicle (template 3).
    pub neighbor_route: Option<Arc<Polyline>>,
}

/// Junction topology.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum JunctionKind {
    FourWay,
    /// Side road to the north only.
    TeeNorth,
    /// Side road to the south only.
    TeeSouth,
}

/// Fetch the cached layout for a (template, route) pair.
pub fn layout(template_id: u8, route_id: u8) -> Result<Arc<Layout>> {
    if !(1..=TEMPLATE_COUNT).contains(&template_id) {
        return Err(CoreError::InvalidSpec(format!(
            "template id {template_id} out of range 1..={TEMPLATE_COUNT}"
        )));
    }
    if route_id >= ROUTE_COUNT {
        return Err(CoreError::InvalidSpec(format!(
            "route id {route_id} out of range 0..{ROUTE_COUNT}"
        )));
    }
    static CACHE: OnceLock<Mutex<BTreeMap<(u8, u8), Arc<Layout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut guard = cache.lock().expect("layout cache poisoned");
    Ok(guard
        .entry((template_id, route_id))
        .or_insert_with(|| Arc::new(build_layout(template_id, route_id)))
        .clone())
}

fn build_layout(template_id: u8, route_id: u8) -> Layout {
    match template_id {
        1 => straight_obstacle(route_id),
        2 => turning_obstacle(route_id),
        3 => lane_changing(route_id),
        4 => vehicle_passing(route_id),
        5 => red_light_running(route_id),
        6 => unprotected_left_turn(route_id),
        7 => right_turn(route_id),
        8 => crossing_negotiation(route_id),
        _ => unreachable!("template id validated by caller"),
    }
}

// ---------------------------------------------------------------------------
// shared pieces
// ---------------------------------------------------------------------------

fn line(pts: Vec<Vec2>) -> Polyline {
    Polyline::new(pts).expect("layout polyline")
}

fn lane(id: u32, pts: Vec<Vec2>, width: f64, limit: f64) -> Lane {
    Lane {
        id,
        center: line(pts),
        width,
        speed_limit: limit,
    }
}

/// Same-direction multi-lane road along +x; ego lane is lane 0 at y = 0.
fn same_dir_road(n_lanes: usize, w: f64, limit: f64, x0: f64, x1: f64) -> WorldMap {
    let lanes = (0..n_lanes)
        .map(|i| {
            let y = i as f64 * w;
            lane(
                i as u32,
                vec![Vec2::new(x0, y), Vec2::new(x1, y)],
                w,
                limit,
            )
        })
        .collect();
    WorldMap {
        lanes,
        junctions: vec![],
        lights: vec![],
        stop_signs: vec![],
    }
}

/// Two-way road along x: eastbound lane at y = -w/2, westbound at y = +w/2.
fn two_way_road(w: f64, limit: f64, x0: f64, x1: f64) -> WorldMap {
    let e = lane(
        0,
        vec![Vec2::new(x0, -w * 0.5), Vec2::new(x1, -w * 0.5)],
        w,
        limit,
    );
    let wl = lane(
        1,
        vec![Vec2::new(x1, w * 0.5), Vec2::new(x0, w * 0.5)],
        w,
        limit,
    );
    WorldMap {
        lanes: vec![e, wl],
        junctions: vec![],
        lights: vec![],
        stop_signs: vec![],
    }
}

/// Two-way EW road crossing a two-way NS road at (c, 0).
fn junction_map(kind: JunctionKind, c: f64, w: f64, limit: f64, x_max: f64) -> WorldMap {
    let h = w * 0.5;
    let mut lanes = vec![
        // Eastbound / westbound through lanes.
        lane(0, vec![Vec2::new(-20.0, -h), Vec2::new(x_max, -h)], w, limit),
        lane(1, vec![Vec2::new(x_max, h), Vec2::new(-20.0, h)], w, limit),
    ];
    let (y_lo, y_hi) = match kind {
        JunctionKind::FourWay => (-60.0, 60.0),
        JunctionKind::TeeNorth => (-JUNCTION_HALF, 60.0),
        JunctionKind::TeeSouth => (-60.0, JUNCTION_HALF),
    };
    // Northbound on the east side, southbound on the west side.
    lanes.push(lane(
        2,
        vec![Vec2::new(c + h, y_lo), Vec2::new(c + h, y_hi)],
        w,
        limit,
    ));
    lanes.push(lane(
        3,
        vec![Vec2::new(c - h, y_hi), Vec2::new(c - h, y_lo)],
        w,
        limit,
    ));
    WorldMap {
        lanes,
        junctions: vec![Polygon::rect(
            Vec2::new(c, 0.0),
            JUNCTION_HALF,
            JUNCTION_HALF,
        )],
        lights: vec![],
        stop_signs: vec![],
    }
}

/// Stop line across the eastbound ego lane just before the junction.
fn ego_stop_line(c: f64, w: f64) -> StopLine {
    StopLine {
        a: Vec2::new(c - STOP_LINE_BACK, -w - 0.2),
        b: Vec2::new(c - STOP_LINE_BACK, 0.2),
    }
}

/// Quarter-arc left turn: eastbound approach into the northbound exit lane.
fn left_turn_route(c: f64, w: f64, exit_len: f64) -> Polyline {
    let h = w * 0.5;
    let r = h + TURN_SETBACK + 0.25; // matches a comfortable steering angle
    let ax = c - TURN_SETBACK - 0.25;
    let center = Vec2::new(ax, -h + r);
    let mut pts = vec![Vec2::new(0.0, -h)];
    let steps = 12;
    for k in 0..=steps {
        let theta = -FRAC_PI_2 + FRAC_PI_2 * k as f64 / steps as f64;
        pts.push(center + Vec2::from_angle(theta) * r);
    }
    let exit_y = -h + r;
    pts.push(Vec2::new(c + h, exit_y + exit_len));
    line(pts)
}

/// Quarter-arc right turn: eastbound approach into the southbound exit lane.
fn right_turn_route(c: f64, w: f64, exit_len: f64) -> Polyline {
    let h = w * 0.5;
    let r = h + TURN_SETBACK + 0.25;
    let ax = c - h - r;
    let center = Vec2::new(ax, -h - r);
    let mut pts = vec![Vec2::new(0.0, -h)];
    let steps = 12;
    for k in 0..=steps {
        let theta = FRAC_PI_2 - FRAC_PI_2 * k as f64 / steps as f64;
        pts.push(center + Vec2::from_angle(theta) * r);
    }
    pts.push(Vec2::new(c - h, -h - r - exit_len));
    line(pts)
}

fn arc_project(route: &Polyline, p: Vec2) -> f64 {
    route.project(p).s
}

// ---------------------------------------------------------------------------
// template builders
// ---------------------------------------------------------------------------

/// Template 1: a cyclist staged beside a straight road darts across the ego
/// lane when triggered.
fn straight_obstacle(rid: u8) -> Layout {
    let r = rid as usize;
    let n_lanes = 2 + r % 2;
    let w = [3.5, 4.0][(r / 2) % 2];
    let limit = [8.0, 6.0, 10.0][r % 3];
    let len = [100.0, 90.0, 110.0, 95.0, 105.0, 100.0, 90.0, 110.0, 95.0, 105.0][r];
    let map = same_dir_road(n_lanes, w, limit, -20.0, len + 40.0);
    let route = line(vec![Vec2::ZERO, Vec2::new(len, 0.0)]);
    Layout {
        template_id: 1,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict: Vec2::ZERO,
        adv_route: None,
        adv_conflict_s: 0.0,
        adv_base_s: 0.0,
        neighbor_route: None,
    }
}

/// Template 2: ego turns at a junction; a pedestrian staged beyond the corner
/// crosses when triggered.
fn turning_obstacle(rid: u8) -> Layout {
    let r = rid as usize;
    let c = 25.0 + 5.0 * ((r / 2) % 3) as f64;
    let w = 3.5;
    let limit = [8.0, 6.0, 8.0, 10.0, 8.0, 6.0, 8.0, 10.0, 8.0, 6.0][r];
    let turn_right = rid % 2 == 0;
    let kind = if r < 6 {
        JunctionKind::FourWay
    } else if turn_right {
        JunctionKind::TeeSouth
    } else {
        JunctionKind::TeeNorth
    };
    let mut map = junction_map(kind, c, w, limit, c + 60.0);
    if r % 3 == 1 {
        map.stop_signs.push(StopSign {
            stop_line: ego_stop_line(c, w),
        });
    }
    let route = if turn_right {
        right_turn_route(c, w, 35.0)
    } else {
        left_turn_route(c, w, 35.0)
    };
    Layout {
        template_id: 2,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict: Vec2::new(c, 0.0),
        adv_route: None,
        adv_conflict_s: 0.0,
        adv_base_s: 0.0,
        neighbor_route: None,
    }
}

/// Template 3: a lead vehicle in the ego lane brakes or swerves; a scripted
/// neighbor occupies the adjacent lane.
fn lane_changing(rid: u8) -> Layout {
    let r = rid as usize;
    let n_lanes = 2 + r % 2;
    let w = [3.5, 4.0][(r / 2) % 2];
    let limit = [8.0, 6.0, 10.0][r % 3];
    let len = [110.0, 100.0, 120.0, 110.0, 100.0, 120.0, 110.0, 100.0, 120.0, 110.0][r];
    let map = same_dir_road(n_lanes, w, limit, -20.0, len + 40.0);
    let route = line(vec![Vec2::ZERO, Vec2::new(len, 0.0)]);
    let adv_route = line(vec![Vec2::new(-20.0, 0.0), Vec2::new(len + 40.0, 0.0)]);
    let neighbor = line(vec![Vec2::new(-20.0, w), Vec2::new(len + 40.0, w)]);
    let base = arc_project(&adv_route, Vec2::ZERO);
    Layout {
        template_id: 3,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict: Vec2::ZERO,
        adv_route: Some(Arc::new(adv_route)),
        adv_conflict_s: 0.0,
        adv_base_s: base,
        neighbor_route: Some(Arc::new(neighbor)),
    }
}

/// Where the parked vehicle sits along the passing-template road (m).
pub(crate) const PASS_BLOCKER_X: f64 = 55.0;

/// Template 4: a vehicle is parked on the right shoulder of a two-way road;
/// an oncoming vehicle launches as the ego draws level with it. The lanes are
/// wide enough that two centered vehicles meet with room to spare, so a crash
/// requires the oncoming driver to wander across the center seam while the
/// ego rides near it — the danger is the meeting, not the parked car itself.
fn vehicle_passing(rid: u8) -> Layout {
    let r = rid as usize;
    let w = [5.0, 5.5][r % 2];
    let limit = [8.0, 6.0, 10.0][r % 3];
    let len = [100.0, 95.0, 105.0, 100.0, 95.0, 105.0, 100.0, 95.0, 105.0, 100.0][r];
    let map = two_way_road(w, limit, -20.0, len + 40.0);
    let h = w * 0.5;
    let route = line(vec![Vec2::new(0.0, -h), Vec2::new(len, -h)]);
    let adv_route = line(vec![Vec2::new(len + 40.0, h), Vec2::new(-20.0, h)]);
    // The parked vehicle sits just off the asphalt: its near edge clears the
    // road boundary and it is far enough from the ego lane center that a
    // lane-keeping pass never touches it.
    let parked = Vec2::new(PASS_BLOCKER_X, -w - 1.2);
    let base = arc_project(&adv_route, Vec2::new(PASS_BLOCKER_X, h));
    Layout {
        template_id: 4,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict: parked,
        adv_route: Some(Arc::new(adv_route)),
        adv_conflict_s: 0.0,
        adv_base_s: base,
        neighbor_route: None,
    }
}

/// Template 5: signalized junction; a crossing vehicle runs its red light as
/// the ego approaches on green.
fn red_light_running(rid: u8) -> Layout {
    let r = rid as usize;
    let c = 30.0 + 5.0 * ((r / 2) % 3) as f64;
    let w = 3.5;
    let limit = if r % 3 == 2 { 10.0 } else { 8.0 };
    let h = w * 0.5;
    let mut map = junction_map(JunctionKind::FourWay, c, w, limit, c + 60.0);
    map.lights.push(TrafficLight {
        stop_line: ego_stop_line(c, w),
        schedule: LIGHT_SCHEDULE,
        initial: LightPhase::Green,
    });
    let from_north = rid % 2 == 0;
    let adv_line = if from_north {
        StopLine {
            a: Vec2::new(c - w - 0.2, STOP_LINE_BACK),
            b: Vec2::new(c + 0.2, STOP_LINE_BACK),
        }
    } else {
        StopLine {
            a: Vec2::new(c - 0.2, -STOP_LINE_BACK),
            b: Vec2::new(c + w + 0.2, -STOP_LINE_BACK),
        }
    };
    map.lights.push(TrafficLight {
        stop_line: adv_line,
        schedule: LIGHT_SCHEDULE,
        initial: LightPhase::Red,
    });
    let route = line(vec![Vec2::new(0.0, -h), Vec2::new(c + 55.0, -h)]);
    let adv_route = if from_north {
        line(vec![Vec2::new(c - h, 55.0), Vec2::new(c - h, -45.0)])
    } else {
        line(vec![Vec2::new(c + h, -55.0), Vec2::new(c + h, 45.0)])
    };
    let conflict = Vec2::new(c, 0.0);
    let adv_conflict_s = arc_project(&adv_route, conflict);
    Layout {
        template_id: 5,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict,
        adv_route: Some(Arc::new(adv_route)),
        adv_conflict_s,
        adv_base_s: 0.0,
        neighbor_route: None,
    }
}

/// Template 6: ego turns left across the path of an oncoming vehicle.
fn unprotected_left_turn(rid: u8) -> Layout {
    let r = rid as usize;
    let c = 25.0 + 5.0 * ((r / 2) % 3) as f64;
    let w = 3.5;
    let limit = [8.0, 6.0, 10.0][r % 3];
    let h = w * 0.5;
    let kind = if rid % 2 == 0 {
        JunctionKind::FourWay
    } else {
        JunctionKind::TeeNorth
    };
    let map = junction_map(kind, c, w, limit, c + 60.0);
    let route = left_turn_route(c, w, 35.0);
    let adv_route = line(vec![Vec2::new(c + 55.0, h), Vec2::new(c - 45.0, h)]);
    let conflict = Vec2::new(c, 0.0);
    let adv_conflict_s = arc_project(&adv_route, conflict);
    Layout {
        template_id: 6,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict,
        adv_route: Some(Arc::new(adv_route)),
        adv_conflict_s,
        adv_base_s: 0.0,
        neighbor_route: None,
    }
}

/// Template 7: ego turns right; a vehicle bearing down the exit lane from the
/// left merges into the same lane.
fn right_turn(rid: u8) -> Layout {
    let r = rid as usize;
    let c = 25.0 + 5.0 * ((r / 2) % 3) as f64;
    let w = 3.5;
    let limit = [8.0, 6.0, 10.0][r % 3];
    let map = junction_map(JunctionKind::FourWay, c, w, limit, c + 60.0);
    let route = right_turn_route(c, w, 35.0);
    let adv_route = line(vec![Vec2::new(c - w * 0.5, 55.0), Vec2::new(c - w * 0.5, -50.0)]);
    let conflict = Vec2::new(c, 0.0);
    let adv_conflict_s = arc_project(&adv_route, conflict);
    Layout {
        template_id: 7,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict,
        adv_route: Some(Arc::new(adv_route)),
        adv_conflict_s,
        adv_base_s: 0.0,
        neighbor_route: None,
    }
}

/// Template 8: unsignalized crossing; a vehicle from the side road crosses the
/// ego's path as it traverses the junction.
fn crossing_negotiation(rid: u8) -> Layout {
    let r = rid as usize;
    let c = 30.0 + 5.0 * ((r / 2) % 3) as f64;
    let w = 3.5;
    let limit = [8.0, 10.0, 6.0][r % 3];
    let h = w * 0.5;
    let mut map = junction_map(JunctionKind::FourWay, c, w, limit, c + 60.0);
    if rid % 2 == 1 {
        map.stop_signs.push(StopSign {
            stop_line: ego_stop_line(c, w),
        });
    }
    let route = line(vec![Vec2::new(0.0, -h), Vec2::new(c + 55.0, -h)]);
    let adv_route = line(vec![Vec2::new(c + h, -55.0), Vec2::new(c + h, 45.0)]);
    let conflict = Vec2::new(c, 0.0);
    let adv_conflict_s = arc_project(&adv_route, conflict);
    Layout {
        template_id: 8,
        route_id: rid,
        map: Arc::new(map),
        route: Arc::new(route),
        lane_width: w,
        speed_limit: limit,
        ego_start_speed: 5.0,
        conflict,
        adv_route: Some(Arc::new(adv_route)),
        adv_conflict_s,
        adv_base_s: 0.0,
        neighbor_route: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::behavior::{junction_entry, stops_for_route};

    #[test]
    fn all_layouts_build_and_are_sane() {
        for t in 1..=TEMPLATE_COUNT {
            for r in 0..ROUTE_COUNT {
                let l = layout(t, r).unwrap();
                assert!(l.route.len() > 40.0, "t{t} r{r}: route too short");
                assert!(l.lane_width >= 3.0 && l.lane_width <= 6.0);
                assert!(l.speed_limit >= 5.0 && l.speed_limit <= 12.0);
                // The whole ego route must be drivable.
                let mut s = 0.0;
                while s <= l.route.len() {
                    let p = l.route.point_at(s);
                    assert!(
                        l.map.contains(p),
                        "t{t} r{r}: route point off road at s={s:.1} ({:.2},{:.2})",
                        p.x,
                        p.y
                    );
                    s += 0.5;
                }
                // Vehicle-adversary templates carry an adversary path that is
                // itself drivable.
                if t >= 3 {
                    let adv = l.adv_route.as_ref().expect("adversary route");
                    let mut s = 0.0;
                    while s <= adv.len() {
                        let p = adv.point_at(s);
                        assert!(
                            l.map.contains(p),
                            "t{t} r{r}: adversary point off road at s={s:.1}"
                        );
                        s += 1.0;
                    }
                }
            }
        }
    }

    #[test]
    fn layout_cache_returns_same_instance() {
        let a = layout(5, 0).unwrap();
        let b = layout(5, 0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn junction_templates_have_entry_on_route() {
        for t in [2u8, 5, 6, 7, 8] {
            for r in 0..ROUTE_COUNT {
                let l = layout(t, r).unwrap();
                let entry = junction_entry(&l.route, &l.map);
                assert!(entry.is_some(), "t{t} r{r}: no junction entry");
                let (_, s) = entry.unwrap();
                assert!(s > 5.0 && s < l.route.len() - 5.0);
            }
        }
    }

    #[test]
    fn signal_layout_has_ego_and_adversary_lights() {
        let l = layout(5, 0).unwrap();
        assert_eq!(l.map.lights.len(), 2);
        let stops = stops_for_route(&l.route, &l.map);
        // Ego approach sees its own light and the junction entry, and the
        // adversary's cross-street stop line never crosses the ego route.
        let lights: Vec<_> = stops
            .iter()
            .filter(|sp| matches!(sp.kind, crate::scenario::behavior::StopKind::Light(_)))
            .collect();
        assert_eq!(lights.len(), 1);
        assert_eq!(l.map.lights[0].initial, LightPhase::Green);
        assert_eq!(l.map.lights[1].initial, LightPhase::Red);
    }

    #[test]
    fn turn_routes_stay_within_steering_envelope() {
        // Max curvature of the turn arcs must be trackable under the steering
        // cap: tan(0.3) / wheelbase gives the tightest drivable radius.
        let min_radius = 2.8 / 0.3f64.tan();
        for (t, r) in [(2u8, 0u8), (2, 1), (6, 0), (7, 0)] {
            let l = layout(t, r).unwrap();
            let pts = l.route.points();
            for w in pts.windows(3) {
                let a = (w[1] - w[0]).angle();
                let b = (w[2] - w[1]).angle();
                let dtheta = crate::geom::wrap_angle(b - a).abs();
                if dtheta < 1e-9 {
                    continue;
                }
                let seg = w[0].dist(w[1]).min(w[1].dist(w[2]));
                let radius = seg / dtheta;
                assert!(
                    radius > min_radius * 0.98,
                    "t{t} r{r}: arc radius {radius:.2} under steering envelope {min_radius:.2}"
                );
            }
        }
    }

    #[test]
    fn adversary_conflict_arcs_are_interior() {
        for t in [5u8, 6, 7, 8] {
            for r in 0..ROUTE_COUNT {
                let l = layout(t, r).unwrap();
                let adv = l.adv_route.as_ref().unwrap();
                assert!(
                    l.adv_conflict_s > 40.0 && l.adv_conflict_s < adv.len(),
                    "t{t} r{r}: conflict arc {} outside usable range",
                    l.adv_conflict_s
                );
            }
        }
    }
}
