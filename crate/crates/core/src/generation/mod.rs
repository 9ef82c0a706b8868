//! Scenario search: black-box optimizers that tune template parameters to
//! maximize a rollout-based risk objective against a fixed ego agent.

pub mod bo;
pub mod gp;
pub mod grid;
pub mod pso;
pub mod random;
pub mod reinforce;

use crate::agents::{run_agent_episode, EgoAgent};
use crate::error::{CoreError, Result};
use crate::exec;
use crate::scenario::library::LibraryEntry;
use crate::scenario::{instantiate, placement_excursion, template, GeneratorId, ScenarioSpec};
use crate::seeding::stream_seed;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Distance (m) at which the proximity shaping term reaches zero.
pub const RISK_D_NORM: f64 = 10.0;
/// Weight of the proximity shaping term relative to a collision.
pub const PROXIMITY_WEIGHT: f64 = 0.5;
/// Normalized-space L-infinity radius inside which two kept scenarios count
/// as duplicates.
pub const DEDUP_L_INF: f64 = 0.01;
/// Default number of scenarios retained per (template, route) task.
pub const DEFAULT_KEEP_K: usize = 10;

/// Risk of one rollout: 1 for a collision plus a dense proximity bonus that
/// rewards near misses. Range [0, 1.5]; ≥ 1 iff the rollout collided.
pub fn risk_objective(collision: bool, min_distance: Option<f64>) -> f64 {
    let proximity = match min_distance {
        Some(d) => (1.0 - d / RISK_D_NORM).max(0.0),
        None => 0.0,
    };
    (collision as u8) as f64 + PROXIMITY_WEIGHT * proximity
}

/// One scenario-search job: a (template, route) cell attacked with `budget`
/// rollouts against a fixed ego agent.
#[derive(Clone)]
pub struct GenerationTask {
    pub template_id: u8,
    pub route_id: u8,
    /// The ego agent the search probes for weaknesses.
    pub surrogate: EgoAgent,
    /// Maximum number of simulator rollouts.
    pub budget: usize,
    /// Scenarios to retain, ranked by objective.
    pub keep_k: usize,
    /// Master seed; per-rollout seeds derive from it by evaluation index.
    pub seed: u64,
}

impl GenerationTask {
    pub fn dims(&self) -> Result<usize> {
        Ok(template(self.template_id)?.params.len())
    }

    pub fn init_dims(&self) -> Result<usize> {
        Ok(template(self.template_id)?.init_dims)
    }
}

/// Outcome of a single objective evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Global evaluation index within the task (also seeds the rollout).
    pub index: u32,
    /// Normalized full-dimension parameter vector.
    pub unit: Vec<f64>,
    pub spec: ScenarioSpec,
    pub objective: f64,
    pub min_distance: f64,
    pub collision: bool,
    /// False when the parameters place an actor outside the drivable area
    /// (no rollout was run).
    pub feasible: bool,
    pub wall_ms: u64,
}

/// Per-iteration line of the generation run log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub iteration: u32,
    pub params: Vec<f64>,
    pub objective: f64,
    pub feasible: bool,
    pub wall_ms: u64,
}

/// Result of one generation task.
#[derive(Clone, Debug)]
pub struct GenerationRun {
    pub generator: GeneratorId,
    pub template_id: u8,
    pub route_id: u8,
    /// Top scenarios by objective, deduplicated, feasible only.
    pub kept: Vec<LibraryEntry>,
    pub log: Vec<RunLogEntry>,
    /// Rollouts actually performed (≤ budget).
    pub evals_used: usize,
    /// Running best objective after each evaluation (nondecreasing).
    pub incumbent: Vec<f64>,
}

/// Evaluate the risk objective for one normalized parameter vector.
///
/// Deterministic given (unit, index): the rollout seed is drawn from the
/// task's seed stream at `index`. Parameters that place an actor off the
/// drivable area skip the rollout and score zero; how that is *treated*
/// (rejected, filtered, or penalized) is up to the calling optimizer.
pub fn evaluate_one(
    task: &GenerationTask,
    generator: GeneratorId,
    index: u32,
    unit: &[f64],
) -> Result<Evaluation> {
    let start = Instant::now();
    let spec = ScenarioSpec::from_normalized(
        task.template_id,
        task.route_id,
        generator,
        unit,
        stream_seed(task.seed, index as u64),
    )?;
    let excess = placement_excursion(&spec)?;
    if excess > 0.0 {
        return Ok(Evaluation {
            index,
            unit: unit.to_vec(),
            spec,
            objective: 0.0,
            min_distance: f64::INFINITY,
            collision: false,
            feasible: false,
            wall_ms: start.elapsed().as_millis() as u64,
        });
    }
    let instance = instantiate(&spec)?;
    let rollout = run_agent_episode(instance, &task.surrogate, spec.seed)?;
    let min_distance = rollout.min_adversary_distance.unwrap_or(f64::INFINITY);
    Ok(Evaluation {
        index,
        unit: unit.to_vec(),
        spec,
        objective: risk_objective(rollout.collided, rollout.min_adversary_distance),
        min_distance,
        collision: rollout.collided,
        feasible: true,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Evaluate a batch of normalized vectors in parallel. Indices continue from
/// `start_index`, so seeds are stable regardless of scheduling.
pub fn evaluate_batch(
    task: &GenerationTask,
    generator: GeneratorId,
    start_index: u32,
    units: &[Vec<f64>],
) -> Result<Vec<Evaluation>> {
    exec::map_indexed(units.len(), |i| {
        evaluate_one(task, generator, start_index + i as u32, &units[i])
    })
    .into_iter()
    .collect()
}

/// Expand an initial-condition sub-vector to the full normalized space with
/// the perturbation block pinned to zero in raw units.
pub fn expand_init(template_id: u8, init_unit: &[f64]) -> Result<Vec<f64>> {
    let def = template(template_id)?;
    if init_unit.len() != def.init_dims {
        return Err(CoreError::InvalidSpec(format!(
            "expected {} initial-condition coordinates, got {}",
            def.init_dims,
            init_unit.len()
        )));
    }
    let mut unit = Vec::with_capacity(def.params.len());
    unit.extend_from_slice(init_unit);
    for pd in &def.params[def.init_dims..] {
        unit.push((0.0 - pd.lo) / pd.span());
    }
    Ok(unit)
}

/// Retain the top-`keep_k` feasible evaluations by objective, skipping any
/// candidate within an L-infinity box of 1% (normalized) of one already kept.
pub fn keep_top_k(evals: &[Evaluation], keep_k: usize) -> Result<Vec<LibraryEntry>> {
    let mut order: Vec<&Evaluation> = evals.iter().filter(|e| e.feasible).collect();
    order.sort_by(|a, b| {
        b.objective
            .partial_cmp(&a.objective)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    let mut kept: Vec<LibraryEntry> = Vec::new();
    let mut kept_units: Vec<&[f64]> = Vec::new();
    for e in order {
        if kept.len() >= keep_k {
            break;
        }
        let dup = kept_units.iter().any(|u| {
            u.iter()
                .zip(&e.unit)
                .all(|(a, b)| (a - b).abs() < DEDUP_L_INF)
        });
        if dup {
            continue;
        }
        kept.push(LibraryEntry::new(
            &e.spec,
            e.objective,
            e.min_distance,
            e.collision,
            e.index,
        )?);
        kept_units.push(&e.unit);
    }
    Ok(kept)
}

/// Assemble a `GenerationRun` from the raw evaluation sequence.
pub fn finish_run(
    task: &GenerationTask,
    generator: GeneratorId,
    evals: Vec<Evaluation>,
) -> Result<GenerationRun> {
    let mut by_index = evals;
    by_index.sort_by_key(|e| e.index);
    let mut incumbent = Vec::with_capacity(by_index.len());
    let mut best = f64::NEG_INFINITY;
    let mut log = Vec::with_capacity(by_index.len());
    for e in &by_index {
        // Infeasible points never become incumbents (they have no rollout).
        if e.feasible {
            best = best.max(e.objective);
        }
        incumbent.push(if best.is_finite() { best } else { 0.0 });
        log.push(RunLogEntry {
            iteration: e.index,
            params: e.spec.params.clone(),
            objective: e.objective,
            feasible: e.feasible,
            wall_ms: e.wall_ms,
        });
    }
    let kept = keep_top_k(&by_index, task.keep_k)?;
    Ok(GenerationRun {
        generator,
        template_id: task.template_id,
        route_id: task.route_id,
        kept,
        log,
        evals_used: by_index.len(),
        incumbent,
    })
}

/// Produce the single fixed benign scenario for the task's (template, route),
/// evaluated once for log completeness.
pub fn generate_benign(task: &GenerationTask) -> Result<GenerationRun> {
    let spec = ScenarioSpec::benign(task.template_id, task.route_id)?;
    let unit = spec.normalized()?;
    let eval = evaluate_one(task, GeneratorId::Benign, 0, &unit)?;
    finish_run(task, GeneratorId::Benign, vec![eval])
}

/// Run the generator named by `generator` on `task`.
pub fn generate(task: &GenerationTask, generator: GeneratorId) -> Result<GenerationRun> {
    if task.budget < task.keep_k && generator != GeneratorId::Benign {
        return Err(CoreError::InvalidSpec(format!(
            "budget {} smaller than keep_k {}",
            task.budget, task.keep_k
        )));
    }
    match generator {
        GeneratorId::Lc => reinforce::generate_lc(task),
        GeneratorId::As => bo::generate_as(task),
        GeneratorId::Cs => grid::generate_cs(task),
        GeneratorId::At => pso::generate_at(task),
        GeneratorId::Random => random::generate_random(task),
        GeneratorId::Benign => generate_benign(task),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mk_eval(index: u32, unit: Vec<f64>, objective: f64, feasible: bool) -> Evaluation {
        let spec = ScenarioSpec::from_normalized(1, 0, GeneratorId::Random, &unit, 7).unwrap();
        Evaluation {
            index,
            unit,
            spec,
            objective,
            min_distance: 4.0,
            collision: objective >= 1.0,
            feasible,
            wall_ms: 0,
        }
    }

    #[test]
    fn risk_objective_matches_definition() {
        assert_eq!(risk_objective(false, Some(12.0)), 0.0);
        assert_eq!(risk_objective(false, Some(2.0)), 0.5 * 0.8);
        assert!(risk_objective(true, Some(0.0)) >= 1.0);
        assert_eq!(risk_objective(true, Some(0.0)), 1.5);
        assert_eq!(risk_objective(false, None), 0.0);
    }

    #[test]
    fn keeper_ranks_dedups_and_skips_infeasible() {
        let evals = vec![
            mk_eval(0, vec![0.50, 0.5, 0.5, 0.5], 0.4, true),
            // Near-duplicate of index 0 with higher J: kept, index 0 dropped.
            mk_eval(1, vec![0.505, 0.5, 0.5, 0.5], 0.9, true),
            mk_eval(2, vec![0.2, 0.2, 0.2, 0.2], 1.2, true),
            mk_eval(3, vec![0.9, 0.9, 0.9, 0.9], 1.5, false),
            mk_eval(4, vec![0.7, 0.7, 0.7, 0.7], 0.1, true),
        ];
        let kept = keep_top_k(&evals, 3).unwrap();
        let iters: Vec<u32> = kept.iter().map(|k| k.iteration).collect();
        assert_eq!(iters, vec![2, 1, 4], "expected J-descending feasible keeps");
    }

    #[test]
    fn expand_init_pins_perturbations_to_raw_zero() {
        let unit = expand_init(3, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(unit.len(), 11);
        let spec = ScenarioSpec::from_normalized(3, 0, GeneratorId::Cs, &unit, 0).unwrap();
        for v in &spec.params[3..] {
            assert!(v.abs() < 1e-12, "perturbation should be zero, got {v}");
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_within_range() {
        let task = GenerationTask {
            template_id: 1,
            route_id: 0,
            surrogate: EgoAgent::RuleBased,
            budget: 10,
            keep_k: 5,
            seed: 99,
        };
        let unit = vec![0.5, 0.6, 0.5, 0.5];
        let a = evaluate_one(&task, GeneratorId::Random, 3, &unit).unwrap();
        let b = evaluate_one(&task, GeneratorId::Random, 3, &unit).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.min_distance, b.min_distance);
        assert!((0.0..=1.5).contains(&a.objective));
        assert_eq!(a.spec.seed, stream_seed(99, 3));
    }

    #[test]
    fn infeasible_point_scores_zero_without_rollout() {
        let task = GenerationTask {
            template_id: 1,
            route_id: 0,
            surrogate: EgoAgent::RuleBased,
            budget: 10,
            keep_k: 5,
            seed: 1,
        };
        // lateral_offset pegged to -3: off the drivable area on route 0.
        let unit = vec![0.5, 0.0, 0.5, 0.5];
        let e = evaluate_one(&task, GeneratorId::Random, 0, &unit).unwrap();
        assert!(!e.feasible);
        assert_eq!(e.objective, 0.0);
    }

    #[test]
    fn incumbent_curve_is_nondecreasing_and_ignores_infeasible() {
        let task = GenerationTask {
            template_id: 1,
            route_id: 0,
            surrogate: EgoAgent::RuleBased,
            budget: 10,
            keep_k: 2,
            seed: 5,
        };
        let evals = vec![
            mk_eval(0, vec![0.5, 0.5, 0.5, 0.5], 0.3, true),
            mk_eval(1, vec![0.6, 0.6, 0.6, 0.6], 2.0, false),
            mk_eval(2, vec![0.7, 0.7, 0.7, 0.7], 0.2, true),
            mk_eval(3, vec![0.8, 0.8, 0.8, 0.8], 0.9, true),
        ];
        let run = finish_run(&task, GeneratorId::Random, evals).unwrap();
        assert_eq!(run.incumbent, vec![0.3, 0.3, 0.3, 0.9]);
        assert_eq!(run.evals_used, 4);
        assert_eq!(run.log.len(), 4);
    }
}
