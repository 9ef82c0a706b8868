//! Rule-constrained grid search over the initial-condition block; the
//! perturbation block stays pinned at zero.

use crate::error::Result;
use crate::generation::{evaluate_batch, expand_init, finish_run, GenerationRun, GenerationTask};
use crate::scenario::behavior::Behavior;
use crate::scenario::{instantiate, placement_excursion, GeneratorId, ScenarioSpec};
use crate::seeding::stream_seed;

/// Default grid resolution per dimension.
pub const GRID_POINTS_PER_DIM: usize = 4;

/// Largest k ≤ `GRID_POINTS_PER_DIM` with k^dims ≤ budget (at least 1).
pub fn points_per_dim(budget: usize, dims: usize) -> usize {
    for k in (2..=GRID_POINTS_PER_DIM).rev() {
        if k.pow(dims as u32) <= budget {
            return k;
        }
    }
    1
}

/// Static feasibility rules checked before spending a rollout: every actor
/// placement on the drivable area, and every trigger anchor reachable before
/// the route ends.
pub fn passes_rule_filters(spec: &ScenarioSpec) -> Result<bool> {
    if placement_excursion(spec)? > 0.0 {
        return Ok(false);
    }
    let instance = instantiate(spec)?;
    for b in &instance.behaviors {
        if let Behavior::Adversary { cfg, .. } = b {
            let proj = instance.layout.route.project(cfg.trigger_anchor);
            if proj.s > instance.layout.route.len() - 1.0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Evaluate every rule-feasible grid point and keep the top scenarios.
pub fn generate_cs(task: &GenerationTask) -> Result<GenerationRun> {
    let dims = task.init_dims()?;
    let k = points_per_dim(task.budget, dims);
    let total = k.pow(dims as u32);

    let mut units: Vec<Vec<f64>> = Vec::new();
    for mut idx in 0..total {
        let mut init = vec![0.0; dims];
        // Row-major enumeration, last dimension fastest.
        for d in (0..dims).rev() {
            let cell = idx % k;
            idx /= k;
            init[d] = if k == 1 {
                0.5
            } else {
                cell as f64 / (k - 1) as f64
            };
        }
        let unit = expand_init(task.template_id, &init)?;
        let spec = ScenarioSpec::from_normalized(
            task.template_id,
            task.route_id,
            GeneratorId::Cs,
            &unit,
            stream_seed(task.seed, units.len() as u64),
        )?;
        if passes_rule_filters(&spec)? {
            units.push(unit);
        }
        if units.len() >= task.budget {
            break;
        }
    }

    let evals = evaluate_batch(task, GeneratorId::Cs, 0, &units)?;
    finish_run(task, GeneratorId::Cs, evals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::EgoAgent;
    use crate::generation::evaluate_one;

    fn task(template_id: u8, budget: usize) -> GenerationTask {
        GenerationTask {
            template_id,
            route_id: 0,
            surrogate: EgoAgent::RuleBased,
            budget,
            keep_k: 10,
            seed: 21,
        }
    }

    #[test]
    fn resolution_respects_budget() {
        assert_eq!(points_per_dim(100, 4), 3); // 3^4 = 81 <= 100 < 4^4
        assert_eq!(points_per_dim(64, 3), 4); // 4^3 = 64 exactly
        assert_eq!(points_per_dim(100, 3), 4);
        assert_eq!(points_per_dim(10, 4), 1);
        assert_eq!(points_per_dim(16, 4), 2);
    }

    #[test]
    fn full_grid_runs_when_everything_is_feasible() {
        // Template 3 initial conditions never leave the drivable area.
        let run = generate_cs(&task(3, 64)).unwrap();
        assert_eq!(run.evals_used, 64);
        assert!(run.kept.len() <= 10);
    }

    #[test]
    fn off_road_grid_points_are_filtered_before_rollout() {
        // Template 1's lateral-offset extremes (±3 m) fall off the road on
        // route 0, so the 3^4 grid must shrink.
        let run = generate_cs(&task(1, 100)).unwrap();
        assert!(run.evals_used < 81, "expected filtering, got full grid");
        assert!(run.evals_used >= 27, "center-offset slab must survive");
        assert!(run.log.iter().all(|l| l.feasible));
    }

    #[test]
    fn grid_best_dominates_center_point() {
        let t = task(1, 100);
        let run = generate_cs(&t).unwrap();
        let center = expand_init(1, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let center_eval = evaluate_one(&t, GeneratorId::Cs, 9999, &center).unwrap();
        let best = run
            .kept
            .first()
            .map(|k| k.objective)
            .unwrap_or(f64::NEG_INFINITY);
        assert!(best >= center_eval.objective);
    }
}
