//! Particle-swarm search over the full parameter space with knowledge
//! constraints (adversary stays on the drivable area) enforced as penalties.

use crate::agents::run_agent_episode;
use crate::error::{CoreError, Result};
use crate::exec;
use crate::generation::{
    finish_run, risk_objective, Evaluation, GenerationRun, GenerationTask,
};
use crate::geom::Vec2;
use crate::scenario::{instantiate, placement_excursion, template, GeneratorId, ScenarioSpec};
use crate::seeding::stream_seed;
use crate::sim::world::ActorKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Constriction-style inertia weight.
pub const OMEGA: f64 = 0.7298;
/// Cognitive acceleration coefficient.
pub const C1: f64 = 1.4962;
/// Social acceleration coefficient.
pub const C2: f64 = 1.4962;
/// Default swarm size.
pub const SWARM: usize = 20;
/// Penalty weight on the constraint-violation measure.
pub const PENALTY_WEIGHT: f64 = 10.0;
/// Any violation is at least this large, so penalties always dominate the
/// objective range [0, 1.5].
pub const VIOLATION_FLOOR: f64 = 0.1;
/// Sub-centimeter map excursions from discrete geometry are not violations.
const EXCURSION_TOLERANCE: f64 = 0.05;

/// One velocity/position update. Pure so the fixed-point property is
/// directly testable: at the global best with zero velocity and zero random
/// draws, the position does not move.
pub fn step_particle(
    x: &[f64],
    v: &[f64],
    pbest: &[f64],
    gbest: &[f64],
    r1: &[f64],
    r2: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut nx = Vec::with_capacity(x.len());
    let mut nv = Vec::with_capacity(x.len());
    for d in 0..x.len() {
        let mut vel = OMEGA * v[d] + C1 * r1[d] * (pbest[d] - x[d]) + C2 * r2[d] * (gbest[d] - x[d]);
        vel = vel.clamp(-1.0, 1.0);
        let mut pos = x[d] + vel;
        // Reflect at the box walls.
        while !(0.0..=1.0).contains(&pos) {
            if pos < 0.0 {
                pos = -pos;
            } else {
                pos = 2.0 - pos;
            }
            vel = -vel;
        }
        nx.push(pos);
        nv.push(vel);
    }
    (nx, nv)
}

/// Swarm maximization of a batched objective on the unit cube. `blocks`
/// counts evaluation rounds including the initial one. Returns all (point,
/// value) pairs in evaluation order.
pub fn optimize(
    dims: usize,
    blocks: usize,
    swarm: usize,
    seed: u64,
    f: &mut dyn FnMut(&[Vec<f64>]) -> Vec<f64>,
) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<Vec<f64>> = (0..swarm)
        .map(|_| (0..dims).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let mut vs: Vec<Vec<f64>> = vec![vec![0.0; dims]; swarm];
    let mut history: Vec<(Vec<f64>, f64)> = Vec::with_capacity(blocks * swarm);

    let values = f(&xs);
    let mut pbest_x = xs.clone();
    let mut pbest_v = values.clone();
    for (x, v) in xs.iter().zip(&values) {
        history.push((x.clone(), *v));
    }
    let mut gbest = (0..swarm)
        .max_by(|&a, &b| pbest_v[a].partial_cmp(&pbest_v[b]).unwrap())
        .unwrap();

    for _ in 1..blocks {
        for i in 0..swarm {
            let r1: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.0..1.0)).collect();
            let r2: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (nx, nv) = step_particle(&xs[i], &vs[i], &pbest_x[i], &pbest_x[gbest], &r1, &r2);
            xs[i] = nx;
            vs[i] = nv;
        }
        let values = f(&xs);
        for i in 0..swarm {
            history.push((xs[i].clone(), values[i]));
            if values[i] > pbest_v[i] {
                pbest_v[i] = values[i];
                pbest_x[i] = xs[i].clone();
            }
        }
        gbest = (0..swarm)
            .max_by(|&a, &b| pbest_v[a].partial_cmp(&pbest_v[b]).unwrap())
            .unwrap();
    }
    history
}

/// Objective plus constraint-violation measure for one candidate. Violation
/// is 0 when the adversary placement and (for vehicle adversaries) its whole
/// driven trajectory stay on the drivable area; otherwise at least
/// `VIOLATION_FLOOR` plus the worst excursion in meters.
pub fn evaluate_constrained(
    task: &GenerationTask,
    index: u32,
    unit: &[f64],
) -> Result<(Evaluation, f64)> {
    let start = Instant::now();
    let spec = ScenarioSpec::from_normalized(
        task.template_id,
        task.route_id,
        GeneratorId::At,
        unit,
        stream_seed(task.seed, index as u64),
    )?;
    let excess = placement_excursion(&spec)?;
    if excess > 0.0 {
        let eval = Evaluation {
            index,
            unit: unit.to_vec(),
            spec,
            objective: 0.0,
            min_distance: f64::INFINITY,
            collision: false,
            feasible: false,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        return Ok((eval, VIOLATION_FLOOR + excess));
    }
    let instance = instantiate(&spec)?;
    let adversary_id = instance.adversary_id;
    let vehicle_adversary = template(task.template_id)?.adversary_kind == ActorKind::Vehicle;
    let map = instance.layout.map.clone();
    let rollout = run_agent_episode(instance, &task.surrogate, spec.seed)?;
    let worst_excursion = if vehicle_adversary {
        adversary_id
            .map(|aid| {
                rollout
                    .trace
                    .records
                    .iter()
                    .filter_map(|r| r.actors.iter().find(|a| a.id == aid))
                    .map(|a| map.excursion(Vec2::new(a.x, a.y)))
                    .fold(0.0f64, f64::max)
            })
            .unwrap_or(0.0)
    } else {
        0.0
    };
    let violation = if worst_excursion > EXCURSION_TOLERANCE {
        VIOLATION_FLOOR + worst_excursion
    } else {
        0.0
    };
    let eval = Evaluation {
        index,
        unit: unit.to_vec(),
        spec,
        objective: risk_objective(rollout.collided, rollout.min_adversary_distance),
        min_distance: rollout.min_adversary_distance.unwrap_or(f64::INFINITY),
        collision: rollout.collided,
        feasible: violation == 0.0,
        wall_ms: start.elapsed().as_millis() as u64,
    };
    Ok((eval, violation))
}

/// Swarm search of the full parameter space; constraint violations are
/// penalized inside the swarm and excluded from the kept scenarios.
pub fn generate_at(task: &GenerationTask) -> Result<GenerationRun> {
    let dims = task.dims()?;
    let swarm = SWARM.min(task.budget);
    let blocks = task.budget / swarm;

    let mut evals: Vec<Evaluation> = Vec::with_capacity(blocks * swarm);
    let mut best_violation = f64::INFINITY;
    let mut failure: Option<CoreError> = None;
    {
        let mut penalized = |batch: &[Vec<f64>]| -> Vec<f64> {
            let start = evals.len() as u32;
            let results = exec::map_indexed(batch.len(), |i| {
                evaluate_constrained(task, start + i as u32, &batch[i])
            });
            let mut out = Vec::with_capacity(batch.len());
            for r in results {
                match r {
                    Ok((eval, violation)) => {
                        out.push(eval.objective - PENALTY_WEIGHT * violation);
                        best_violation = best_violation.min(violation);
                        evals.push(eval);
                    }
                    Err(e) => {
                        if failure.is_none() {
                            failure = Some(e);
                        }
                        out.push(f64::NEG_INFINITY);
                    }
                }
            }
            out
        };
        optimize(dims, blocks, swarm, task.seed, &mut penalized);
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if !evals.iter().any(|e| e.feasible) {
        return Err(CoreError::Infeasible(format!(
            "swarm found no constraint-satisfying scenario in {} rollouts \
             (best violation {best_violation:.3})",
            evals.len()
        )));
    }
    finish_run(task, GeneratorId::At, evals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::EgoAgent;

    #[test]
    fn gbest_with_zero_velocity_and_zero_draws_is_a_fixed_point() {
        let x = vec![0.3, 0.7, 0.5];
        let v = vec![0.0; 3];
        let zeros = vec![0.0; 3];
        let (nx, nv) = step_particle(&x, &v, &x, &x, &zeros, &zeros);
        assert_eq!(nx, x);
        assert_eq!(nv, v);
    }

    #[test]
    fn reflection_keeps_positions_in_bounds() {
        let x = vec![0.95];
        let v = vec![0.9];
        let (nx, nv) = step_particle(&x, &v, &[1.0], &[1.0], &[1.0], &[1.0]);
        assert!((0.0..=1.0).contains(&nx[0]), "reflected position {}", nx[0]);
        assert!(nv[0] <= 0.0, "velocity should flip inward");
    }

    #[test]
    fn swarm_solves_eight_dim_sphere() {
        // Maximize -(2x-1)·(2x-1) summed: optimum 0 at the cube center.
        let mut f = |batch: &[Vec<f64>]| -> Vec<f64> {
            batch
                .iter()
                .map(|x| -x.iter().map(|u| (2.0 * u - 1.0).powi(2)).sum::<f64>())
                .collect()
        };
        let history = optimize(8, 50, 20, 12, &mut f);
        assert_eq!(history.len(), 1000);
        let best = history
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best >= -1e-2, "sphere best {best} below tolerance");
    }

    #[test]
    fn penalized_value_dominated_by_any_feasible_collision() {
        // A violating particle scores at most 1.5 - 10*0.1 = 0.5; a feasible
        // collision scores at least 1.0.
        let violating_cap = 1.0 + 0.5 - PENALTY_WEIGHT * VIOLATION_FLOOR;
        assert!(violating_cap < 1.0);
    }

    #[test]
    fn generation_keeps_only_constraint_satisfying_scenarios() {
        let task = GenerationTask {
            template_id: 3,
            route_id: 0,
            surrogate: EgoAgent::RuleBased,
            budget: 40,
            keep_k: 10,
            seed: 13,
        };
        let run = generate_at(&task).unwrap();
        assert_eq!(run.evals_used, 40);
        let a = generate_at(&task).unwrap();
        assert_eq!(a.kept, run.kept);
        assert!(!run.kept.is_empty());
        // Every kept entry came from a feasible evaluation.
        for k in &run.kept {
            let matching = run
                .log
                .iter()
                .find(|l| l.iteration == k.iteration)
                .expect("kept entry must appear in the log");
            assert!(matching.feasible);
        }
    }
}
