//! Dev probe: roll random draws of one template with a freshly trained
//! stochastic agent and print what actually happens in each episode.
//!
//! Usage: probe <template> [n=30] [master-seed=77] [iters=25] [steps=800] [space=4d]
//!
//! template 0 sweeps all templates with random draws; 9 prints the benign
//! outcome grid instead.

use precrash_core::agents::train::stochastic::{self, StochasticPgConfig};
use precrash_core::agents::{run_agent_episode, EgoAgent, ObsSpace};
use precrash_core::rollout::Termination;
use precrash_core::scenario::{instantiate, template, GeneratorId, ScenarioSpec};
use precrash_core::seeding::{stage_seed, stream_seed, task_seed};
use precrash_core::sim::world::EventKind;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let t: u8 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4);
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(30);
    let master: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(77);
    let iters: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(25);
    let steps: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(800);
    let space: ObsSpace = args
        .get(6)
        .map(|s| s.parse().unwrap())
        .unwrap_or(ObsSpace::FourD);

    let train_seed = task_seed(stage_seed(master, "train"), 0, 0, "stochastic_pg");
    let cfg = StochasticPgConfig {
        space,
        hidden: vec![64, 64],
        iterations: iters,
        steps_per_iteration: steps,
        seed: train_seed,
        ..StochasticPgConfig::default()
    };
    let all_t: Vec<u8> = (1..=8).collect();
    let all_r: Vec<u8> = (0..=9).collect();
    let mut sampler = precrash_core::pipeline::benign_sampler(&all_t, &all_r);
    eprintln!("training surrogate ({iters}x{steps})...");
    let report = stochastic::train(&cfg, &mut sampler).unwrap();
    let agent = EgoAgent::trained(Arc::new(report.policy), false, "surrogate");

    let gstage = stage_seed(master, "generate");
    if t == 9 {
        // Benign panel: run the canonical lawful episode on every
        // template/route and print the outcome grid.
        println!("tmpl | outcomes per route 0..9 (C=collide O=offcourse T=timeout .=complete)");
        for tt in 1..=8u8 {
            let mut row = String::new();
            for r in 0..=9u8 {
                let spec = ScenarioSpec::benign(tt, r).unwrap();
                let inst = instantiate(&spec).unwrap();
                let roll = run_agent_episode(inst, &agent, 11 + r as u64).unwrap();
                row.push(match roll.termination {
                    Termination::Collision => 'C',
                    Termination::OffCourse => 'O',
                    Termination::Timeout => 'T',
                    Termination::RouteComplete => '.',
                });
            }
            println!("  t{tt} | {row}");
        }
        return;
    }
    if t == 0 {
        // Sweep mode: outcome histogram per template over n random draws.
        println!("tmpl | collide offcourse timeout complete infeasible | mass");
        for tt in 1..=8u8 {
            let def = template(tt).unwrap();
            let dims = def.params.len();
            let tseed = task_seed(gstage, tt, 0, "random");
            let mut rng = ChaCha8Rng::seed_from_u64(tseed);
            let uni = Uniform::new_inclusive(0.0f64, 1.0);
            let (mut c, mut oc, mut to, mut done, mut inf) = (0, 0, 0, 0, 0);
            for i in 0..n {
                let unit: Vec<f64> = (0..dims).map(|_| uni.sample(&mut rng)).collect();
                let spec = ScenarioSpec::from_normalized(
                    tt,
                    0,
                    GeneratorId::Random,
                    &unit,
                    stream_seed(tseed, i as u64),
                )
                .unwrap();
                let inst = match instantiate(&spec) {
                    Ok(x) => x,
                    Err(_) => {
                        inf += 1;
                        continue;
                    }
                };
                let roll = run_agent_episode(inst, &agent, spec.seed).unwrap();
                match roll.termination {
                    Termination::Collision => c += 1,
                    Termination::OffCourse => oc += 1,
                    Termination::Timeout => to += 1,
                    Termination::RouteComplete => done += 1,
                }
            }
            println!(
                "  t{tt} | {c:>7} {oc:>9} {to:>7} {done:>8} {inf:>10} | {:.0}%",
                100.0 * c as f64 / n as f64
            );
        }
        return;
    }

    let def = template(t).unwrap();
    let dims = def.params.len();
    let tseed = task_seed(gstage, t, 0, "random");
    let mut rng = ChaCha8Rng::seed_from_u64(tseed);
    let uni = Uniform::new_inclusive(0.0f64, 1.0);

    println!("template {t} ({}) params:", def.name);
    for pd in def.params {
        println!("  {:>14} [{:>6.2}, {:>6.2}]", pd.name, pd.lo, pd.hi);
    }
    let mut collisions = 0usize;
    for i in 0..n {
        let unit: Vec<f64> = (0..dims).map(|_| uni.sample(&mut rng)).collect();
        let spec = ScenarioSpec::from_normalized(
            t,
            0,
            GeneratorId::Random,
            &unit,
            stream_seed(tseed, i as u64),
        )
        .unwrap();
        let inst = match instantiate(&spec) {
            Ok(x) => x,
            Err(_) => {
                println!("{i:>3}: infeasible placement");
                continue;
            }
        };
        let roll = run_agent_episode(inst, &agent, spec.seed).unwrap();
        let init: Vec<String> = spec.params[..def.init_dims]
            .iter()
            .map(|p| format!("{p:>5.1}"))
            .collect();
        let last = roll.trace.records.last().unwrap();
        let hit = roll.trace.records.iter().find_map(|rec| {
            rec.events.iter().find_map(|e| match e.kind {
                EventKind::Collision { actor } => Some((rec.tick, actor, rec.ego.speed)),
                _ => None,
            })
        });
        let what = match (roll.termination, hit) {
            (Termination::Collision, Some((tick, actor, v))) => {
                collisions += 1;
                let rec = &roll.trace.records[tick as usize];
                let other = rec
                    .actors
                    .iter()
                    .find(|a| a.id == actor)
                    .map(|a| format!(" adv=({:.1},{:.1})", a.x, a.y))
                    .unwrap_or_default();
                format!(
                    "COLLIDE actor {actor} @t={:.1}s ego_v={v:.1} ego=({:.1},{:.1}){other}",
                    tick as f64 * 0.05,
                    rec.ego.x,
                    rec.ego.y
                )
            }
            (term, _) => format!(
                "{term:?} @t={:.1}s end_v={:.1}",
                last.tick as f64 * 0.05,
                last.ego.speed
            ),
        };
        println!(
            "{i:>3}: init=[{}] dmin={:>5.1} | {what}",
            init.join(","),
            roll.min_adversary_distance.unwrap_or(f64::INFINITY),
        );
    }
    println!("collisions: {collisions}/{n}");
}
