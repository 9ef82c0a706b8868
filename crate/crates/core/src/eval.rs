//! Three-level metric engine: per-episode signals, aggregation across
//! episodes, weighted overall score, scenario selection, and report assembly.
//!
//! Ten metrics are grouped into safety, functionality, and etiquette levels.
//! Each metric `m` is clipped to a cap `m_max` and normalized to a goodness
//! `g in [0, 1]` (inverted for lower-is-better metrics); the overall score is
//! the weighted sum of goodnesses. The weight vector deliberately sums to
//! 1.002, so a perfect agent scores 1.002.

use crate::error::{CoreError, Result};
use crate::geom::Polyline;
use crate::sim::trace::EpisodeTrace;
use crate::sim::world::EventKind;
use crate::sim::DT;
use serde::{Deserialize, Serialize};

pub const METRIC_COUNT: usize = 10;

/// The three reporting levels.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Safety,
    Functionality,
    Etiquette,
}

/// Static definition of one metric column.
#[derive(Copy, Clone, Debug)]
pub struct MetricDef {
    /// Short column label used in reports.
    pub short: &'static str,
    pub level: Level,
    /// Cap applied before normalization.
    pub m_max: f64,
    pub weight: f64,
    /// Whether larger raw values are better (only route following and
    /// completion; everything else measures a cost).
    pub higher_better: bool,
}

/// Metric order is fixed and matches report columns.
pub const METRICS: [MetricDef; METRIC_COUNT] = [
    MetricDef { short: "CR", level: Level::Safety, m_max: 1.0, weight: 0.495, higher_better: false },
    MetricDef { short: "RR", level: Level::Safety, m_max: 1.0, weight: 0.099, higher_better: false },
    MetricDef { short: "SS", level: Level::Safety, m_max: 1.0, weight: 0.099, higher_better: false },
    MetricDef { short: "OR", level: Level::Safety, m_max: 50.0, weight: 0.099, higher_better: false },
    MetricDef { short: "RF", level: Level::Functionality, m_max: 1.0, weight: 0.050, higher_better: true },
    MetricDef { short: "Comp", level: Level::Functionality, m_max: 1.0, weight: 0.050, higher_better: true },
    MetricDef { short: "TS", level: Level::Functionality, m_max: 60.0, weight: 0.050, higher_better: false },
    MetricDef { short: "ACC", level: Level::Etiquette, m_max: 8.0, weight: 0.020, higher_better: false },
    MetricDef { short: "YV", level: Level::Etiquette, m_max: 3.0, weight: 0.020, higher_better: false },
    MetricDef { short: "LI", level: Level::Etiquette, m_max: 20.0, weight: 0.020, higher_better: false },
];

/// Deviation (m) at which an episode counts as fully off-route when computing
/// the route-following score.
pub const DEVIATION_CAP: f64 = 5.0;
/// Time charged for episodes that never complete the route (s).
pub const TIMEOUT_TIME: f64 = 60.0;

/// Raw per-episode signals, before any aggregation.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Collision indicator (1 if the episode had any ego collision).
    pub collision: f64,
    /// Red lights run.
    pub red_light_runs: f64,
    /// Stop signs run.
    pub stop_sign_runs: f64,
    /// Meters driven outside the drivable area.
    pub out_of_road_m: f64,
    /// Tick-mean unsigned lateral deviation from the route (m).
    pub avg_deviation_m: f64,
    /// Maximum route progress reached, in [0, 1].
    pub progress: f64,
    /// Route completion time (s), absent if the route was not completed.
    pub completion_time_s: Option<f64>,
    /// Tick-mean |acceleration command| (m/s^2).
    pub avg_abs_accel: f64,
    /// Tick-mean |yaw rate| (rad/s).
    pub avg_abs_yaw: f64,
    /// Lane invasions (excursions out of the lane corridor).
    pub lane_invasions: f64,
}

/// Aggregated metrics over a set of episodes, in [`METRICS`] order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub values: [f64; METRIC_COUNT],
    pub episodes: usize,
}

impl MetricReport {
    pub fn value(&self, short: &str) -> Option<f64> {
        METRICS
            .iter()
            .position(|m| m.short == short)
            .map(|i| self.values[i])
    }
}

/// Extract per-episode signals from a trace.
///
/// Distances and deviations are recomputed from the logged poses, so a trace
/// read back from disk yields exactly the record of the original run.
pub fn episode_signals(trace: &EpisodeTrace, route: &Polyline) -> MetricRecord {
    let records = &trace.records;
    let mut rec = MetricRecord::default();
    if records.is_empty() {
        return rec;
    }

    let mut out_of_road = false;
    let mut prev_pos: Option<crate::geom::Vec2> = None;
    let mut deviation_sum = 0.0;
    let mut accel_sum = 0.0;
    let mut yaw_sum = 0.0;
    let mut yaw_terms = 0usize;
    let mut prev_heading: Option<f64> = None;

    for (i, r) in records.iter().enumerate() {
        let pos = crate::geom::Vec2::new(r.ego.x, r.ego.y);
        for e in &r.events {
            match e.kind {
                EventKind::Collision { .. } => rec.collision = 1.0,
                EventKind::RedLightRun => rec.red_light_runs += 1.0,
                EventKind::StopSignRun => rec.stop_sign_runs += 1.0,
                EventKind::OutOfRoadEnter => out_of_road = true,
                EventKind::OutOfRoadExit => out_of_road = false,
                EventKind::LaneInvasion => rec.lane_invasions += 1.0,
                EventKind::RouteComplete => {
                    if rec.completion_time_s.is_none() {
                        rec.completion_time_s = Some(e.tick as f64 * trace.meta.dt);
                    }
                }
            }
        }
        if let Some(prev) = prev_pos {
            if out_of_road {
                rec.out_of_road_m += pos.dist(prev);
            }
        }
        let projection = route.project(pos);
        deviation_sum += projection.distance;
        rec.progress = rec.progress.max(projection.s / route.len());
        if let Some(ph) = prev_heading {
            yaw_sum += (crate::geom::wrap_angle(r.ego.heading - ph) / trace.meta.dt).abs();
            yaw_terms += 1;
        }
        // The final record's control is never applied; skip it in the mean.
        if i + 1 < records.len() {
            accel_sum += r.control.accel.abs();
        }
        prev_pos = Some(pos);
        prev_heading = Some(r.ego.heading);
    }

    rec.avg_deviation_m = deviation_sum / records.len() as f64;
    if records.len() > 1 {
        rec.avg_abs_accel = accel_sum / (records.len() - 1) as f64;
    }
    if yaw_terms > 0 {
        rec.avg_abs_yaw = yaw_sum / yaw_terms as f64;
    }
    rec
}

/// Aggregate per-episode records into the ten report metrics.
///
/// All metrics are means over episodes except route following
/// (`1 - E[min(x / 5, 1)]`) and time spent (mean over completed episodes,
/// or 60 s when none completed).
pub fn aggregate(records: &[MetricRecord]) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(CoreError::InvalidSpec(
            "cannot aggregate zero episodes".into(),
        ));
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&MetricRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>() / n;

    let completed: Vec<f64> = records.iter().filter_map(|r| r.completion_time_s).collect();
    let ts = if completed.is_empty() {
        TIMEOUT_TIME
    } else {
        completed.iter().sum::<f64>() / completed.len() as f64
    };

    let values = [
        mean(&|r| r.collision),
        mean(&|r| r.red_light_runs),
        mean(&|r| r.stop_sign_runs),
        mean(&|r| r.out_of_road_m),
        1.0 - mean(&|r| (r.avg_deviation_m / DEVIATION_CAP).min(1.0)),
        mean(&|r| r.progress),
        ts,
        mean(&|r| r.avg_abs_accel),
        mean(&|r| r.avg_abs_yaw),
        mean(&|r| r.lane_invasions),
    ];
    Ok(MetricReport {
        values,
        episodes: records.len(),
    })
}

/// Normalized goodness of one metric value: clip to `[0, m_max]`, divide by
/// `m_max`, and invert for lower-is-better metrics.
pub fn goodness(def: &MetricDef, value: f64) -> f64 {
    let clipped = value.clamp(0.0, def.m_max);
    let scaled = clipped / def.m_max;
    if def.higher_better {
        scaled
    } else {
        1.0 - scaled
    }
}

/// Weighted overall score of a report. Perfect driving scores 1.002 (the
/// weights intentionally sum to 1.002).
pub fn overall_score(report: &MetricReport) -> f64 {
    METRICS
        .iter()
        .zip(report.values.iter())
        .map(|(def, v)| def.weight * goodness(def, *v))
        .sum()
}

/// Per-level sub-scores: weighted goodness renormalized by the level's weight
/// sum, in the order safety, functionality, etiquette.
pub fn level_scores(report: &MetricReport) -> [f64; 3] {
    let mut num = [0.0f64; 3];
    let mut den = [0.0f64; 3];
    for (def, v) in METRICS.iter().zip(report.values.iter()) {
        let idx = match def.level {
            Level::Safety => 0,
            Level::Functionality => 1,
            Level::Etiquette => 2,
        };
        num[idx] += def.weight * goodness(def, *v);
        den[idx] += def.weight;
    }
    [num[0] / den[0], num[1] / den[1], num[2] / den[2]]
}

// ---------------------------------------------------------------------------
// scenario selection
// ---------------------------------------------------------------------------

/// Keep scenarios that collide for at least `min_agents` of the tested agents.
/// `matrix[i][j]` is the collision outcome of scenario `i` against agent `j`.
/// Returns kept row indices in their original order.
pub fn select_scenarios(matrix: &[Vec<bool>], min_agents: usize) -> Vec<usize> {
    matrix
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().filter(|c| **c).count() >= min_agents)
        .map(|(i, _)| i)
        .collect()
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

/// Diagnostic report for one agent: ten metrics, three level scores, overall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub agent: String,
    pub metrics: MetricReport,
    /// Safety, functionality, etiquette.
    pub level_scores: [f64; 3],
    pub overall_score: f64,
}

pub fn diagnostic_report(agent: &str, records: &[MetricRecord]) -> Result<DiagnosticReport> {
    let metrics = aggregate(records)?;
    let level_scores = level_scores(&metrics);
    let overall_score = overall_score(&metrics);
    Ok(DiagnosticReport {
        agent: agent.to_string(),
        metrics,
        level_scores,
        overall_score,
    })
}

/// Leaderboard CSV: one row per agent, metric columns in report order plus the
/// overall score, ranked by overall score (best first).
pub fn leaderboard_csv(reports: &[DiagnosticReport]) -> String {
    let mut rows: Vec<&DiagnosticReport> = reports.iter().collect();
    rows.sort_by(|a, b| {
        b.overall_score
            .partial_cmp(&a.overall_score)
            .expect("finite scores")
            .then_with(|| a.agent.cmp(&b.agent))
    });
    let mut out = String::from("agent");
    for m in &METRICS {
        out.push(',');
        out.push_str(m.short);
    }
    out.push_str(",OS\n");
    for r in rows {
        out.push_str(&r.agent);
        for v in &r.metrics.values {
            out.push(',');
            out.push_str(&format!("{v:.6}"));
        }
        out.push_str(&format!(",{:.6}\n", r.overall_score));
    }
    out
}

/// One cell of the generation-effectiveness table: a (generator, template)
/// pair, before and after selection. `s_*` fields are absent when selection
/// kept nothing from the cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationCell {
    pub generator: String,
    pub template_id: u8,
    pub generated: usize,
    pub selected: usize,
    pub collision_rate: f64,
    pub overall_score: f64,
    pub completion: f64,
    pub selection_rate: f64,
    pub s_collision_rate: Option<f64>,
    pub s_overall_score: Option<f64>,
    pub s_completion: Option<f64>,
}

/// Outcome of one generated scenario against the surrogate agent.
#[derive(Clone, Debug)]
pub struct SpecOutcome {
    pub collided: bool,
    pub record: MetricRecord,
    pub selected: bool,
}

/// Build one generation-stats cell from per-scenario outcomes.
pub fn generation_cell(
    generator: &str,
    template_id: u8,
    outcomes: &[SpecOutcome],
) -> Result<GenerationCell> {
    if outcomes.is_empty() {
        return Err(CoreError::InvalidSpec(
            "generation cell needs at least one scenario".into(),
        ));
    }
    let n = outcomes.len() as f64;
    let cr = outcomes.iter().filter(|o| o.collided).count() as f64 / n;
    let records: Vec<MetricRecord> = outcomes.iter().map(|o| o.record).collect();
    let report = aggregate(&records)?;
    let selected: Vec<&SpecOutcome> = outcomes.iter().filter(|o| o.selected).collect();
    let (s_cr, s_os, s_comp) = if selected.is_empty() {
        (None, None, None)
    } else {
        let sn = selected.len() as f64;
        let s_cr = selected.iter().filter(|o| o.collided).count() as f64 / sn;
        let s_records: Vec<MetricRecord> = selected.iter().map(|o| o.record).collect();
        let s_report = aggregate(&s_records)?;
        (
            Some(s_cr),
            Some(overall_score(&s_report)),
            Some(s_report.value("Comp").unwrap()),
        )
    };
    Ok(GenerationCell {
        generator: generator.to_string(),
        template_id,
        generated: outcomes.len(),
        selected: selected.len(),
        collision_rate: cr,
        overall_score: overall_score(&report),
        completion: report.value("Comp").unwrap(),
        selection_rate: selected.len() as f64 / n,
        s_collision_rate: s_cr,
        s_overall_score: s_os,
        s_completion: s_comp,
    })
}

/// Convenience: timeline of events in a trace as `(time s, description)`.
pub fn event_timeline(trace: &EpisodeTrace) -> Vec<(f64, String)> {
    trace
        .events()
        .map(|e| {
            let what = match &e.kind {
                EventKind::Collision { actor } => format!("collision(ego, actor {actor})"),
                EventKind::RedLightRun => "red light run".into(),
                EventKind::StopSignRun => "stop sign run".into(),
                EventKind::OutOfRoadEnter => "left the road".into(),
                EventKind::OutOfRoadExit => "returned to the road".into(),
                EventKind::LaneInvasion => "lane invasion".into(),
                EventKind::RouteComplete => "route complete".into(),
            };
            (e.tick as f64 * DT, what)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(values: [f64; 10]) -> MetricReport {
        MetricReport {
            values,
            episodes: 1,
        }
    }

    #[test]
    fn weights_and_caps_match_contract() {
        let want_caps = [1.0, 1.0, 1.0, 50.0, 1.0, 1.0, 60.0, 8.0, 3.0, 20.0];
        let want_w = [0.495, 0.099, 0.099, 0.099, 0.05, 0.05, 0.05, 0.02, 0.02, 0.02];
        for ((def, cap), w) in METRICS.iter().zip(want_caps).zip(want_w) {
            assert_eq!(def.m_max, cap, "{}", def.short);
            assert_eq!(def.weight, w, "{}", def.short);
        }
        let sum: f64 = METRICS.iter().map(|m| m.weight).sum();
        assert!((sum - 1.002).abs() < 1e-12);
        assert!(METRICS.iter().all(|m| {
            m.higher_better == (m.short == "RF" || m.short == "Comp")
        }));
        // Level weight sums.
        let lv = |l: Level| -> f64 {
            METRICS
                .iter()
                .filter(|m| m.level == l)
                .map(|m| m.weight)
                .sum()
        };
        assert!((lv(Level::Safety) - 0.792).abs() < 1e-12);
        assert!((lv(Level::Functionality) - 0.150).abs() < 1e-12);
        assert!((lv(Level::Etiquette) - 0.060).abs() < 1e-12);
    }

    #[test]
    fn reference_row_scores() {
        // A full published report row reproduces its overall score.
        let r = report([
            0.780, 0.089, 0.087, 12.619, 0.504, 0.466, 20.860, 2.488, 0.405, 5.764,
        ]);
        assert!((overall_score(&r) - 0.489).abs() <= 0.005);
        let ls = level_scores(&r);
        assert!((ls[0] - 0.459).abs() <= 0.005);
        assert!((ls[1] - 0.541).abs() <= 0.005);
        assert!((ls[2] - 0.755).abs() <= 0.005);
    }

    #[test]
    fn perfect_report_scores_weight_sum() {
        let r = report([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((overall_score(&r) - 1.002).abs() < 1e-12);
        let ls = level_scores(&r);
        for s in ls {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn values_beyond_caps_clip() {
        let r = report([2.0, 5.0, 5.0, 500.0, 1.0, 1.0, 120.0, 20.0, 9.0, 100.0]);
        // CR beyond cap clips to 1 -> goodness 0 everywhere except RF/Comp.
        assert!((overall_score(&r) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn aggregation_matches_definitions() {
        let mk = |c: f64, x: f64, p: f64, t: Option<f64>| MetricRecord {
            collision: c,
            avg_deviation_m: x,
            progress: p,
            completion_time_s: t,
            ..Default::default()
        };
        let recs = vec![
            mk(1.0, 2.5, 1.0, Some(20.0)),
            mk(0.0, 10.0, 0.5, None),
        ];
        let rep = aggregate(&recs).unwrap();
        assert_eq!(rep.value("CR").unwrap(), 0.5);
        // RF: 1 - mean(min(2.5/5,1), min(10/5,1)) = 1 - 0.75 = 0.25.
        assert!((rep.value("RF").unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(rep.value("Comp").unwrap(), 0.75);
        // TS averages completed episodes only.
        assert_eq!(rep.value("TS").unwrap(), 20.0);

        let none = vec![mk(0.0, 0.0, 0.4, None)];
        assert_eq!(aggregate(&none).unwrap().value("TS").unwrap(), 60.0);
    }

    #[test]
    fn selection_rule_and_idempotence() {
        let matrix = vec![
            vec![true, true, false, false],
            vec![true, false, false, false],
            vec![false, false, false, false],
            vec![true, true, true, true],
        ];
        let kept = select_scenarios(&matrix, 2);
        assert_eq!(kept, vec![0, 3]);
        // Re-selecting the kept rows keeps everything (idempotent).
        let sub: Vec<Vec<bool>> = kept.iter().map(|&i| matrix[i].clone()).collect();
        let again = select_scenarios(&sub, 2);
        assert_eq!(again, vec![0, 1]);
    }

    #[test]
    fn leaderboard_ranked_by_score() {
        let mk = |agent: &str, cr: f64| DiagnosticReport {
            agent: agent.into(),
            metrics: report([cr, 0.0, 0.0, 0.0, 1.0, 1.0, 10.0, 1.0, 0.2, 0.0]),
            level_scores: [0.0; 3],
            overall_score: overall_score(&report([
                cr, 0.0, 0.0, 0.0, 1.0, 1.0, 10.0, 1.0, 0.2, 0.0,
            ])),
        };
        let csv = leaderboard_csv(&[mk("worse", 0.9), mk("better", 0.1)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("agent,CR,RR,SS,OR,RF,Comp,TS,ACC,YV,LI,OS"));
        assert!(lines[1].starts_with("better,"));
        assert!(lines[2].starts_with("worse,"));
    }

    proptest! {
        // Goodness stays in [0,1] and the overall score in [0, 1.002] for any
        // raw values; OS is monotone in each lower-is-better metric.
        #[test]
        fn score_bounds_and_monotonicity(
            v in proptest::array::uniform10(-10.0f64..200.0),
            bump in 0.01f64..5.0,
            idx in 0usize..10,
        ) {
            let r = report(v);
            for (def, val) in METRICS.iter().zip(v.iter()) {
                let g = goodness(def, *val);
                prop_assert!((0.0..=1.0).contains(&g));
            }
            let os = overall_score(&r);
            prop_assert!((0.0..=1.002 + 1e-12).contains(&os));

            let mut worse = v;
            if METRICS[idx].higher_better {
                worse[idx] -= bump;
            } else {
                worse[idx] += bump;
            }
            let os_worse = overall_score(&report(worse));
            prop_assert!(os_worse <= os + 1e-12);
        }
    }
}
