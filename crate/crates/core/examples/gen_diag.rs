//! Diagnostic: train a small benign policy, then compare kept-scenario
//! collision rates of every guided generator against the random baseline,
//! per template. Prints timing so budgets can be sized.

use precrash_core::agents::train::stochastic::{self, StochasticPgConfig};
use precrash_core::agents::{run_agent_episode, EgoAgent, ObsSpace};
use precrash_core::error::Result;
use precrash_core::eval::{aggregate, episode_signals, overall_score};
use precrash_core::generation::{generate, GenerationTask};
use precrash_core::scenario::{instantiate, GeneratorId, ScenarioSpec};
use precrash_core::seeding::{stage_seed, task_seed};

use std::sync::Arc;
use std::time::Instant;

fn main() -> Result<()> {
    let master: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(77);
    let iters: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(25);

    // --- train a benign policy --------------------------------------------
    let t0 = Instant::now();
    let train_seed = task_seed(stage_seed(master, "train"), 0, 0, "stochastic_pg");
    let cfg = StochasticPgConfig {
        space: ObsSpace::FourD,
        hidden: vec![64, 64],
        iterations: iters,
        steps_per_iteration: std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(800),
        seed: train_seed,
        ..StochasticPgConfig::default()
    };
    let templates: Vec<u8> = (1..=8).collect();
    let routes: Vec<u8> = (0..=9).collect();
    let mut sampler = precrash_core::pipeline::benign_sampler(&templates, &routes);
    let report = stochastic::train(&cfg, &mut sampler)?;
    eprintln!(
        "train: {:.1}s, returns first->last: {:?} -> {:?}",
        t0.elapsed().as_secs_f64(),
        report.iterations.first().map(|s| s.mean_return),
        report.iterations.last().map(|s| s.mean_return),
    );
    let agent = EgoAgent::trained(Arc::new(report.policy), false, "surrogate");

    // --- benign panel -------------------------------------------------------
    let mut records = Vec::new();
    for &t in &templates {
        for &r in &routes {
            let spec = ScenarioSpec::benign(t, r)?;
            let inst = instantiate(&spec)?;
            let route = inst.layout.route.clone();
            let ro = run_agent_episode(inst, &agent, task_seed(stage_seed(master, "bench"), t, r, "surrogate"))?;
            records.push(episode_signals(&ro.trace, &route));
        }
    }
    let rep = aggregate(&records)?;
    eprintln!(
        "benign OS {:.3}  CR {:.3} Comp {:.3} OR {:.2} RF {:.3} TS {:.1}",
        overall_score(&rep),
        rep.values[0],
        rep.values[5],
        rep.values[3],
        rep.values[4],
        rep.values[6]
    );

    // --- generation comparison ----------------------------------------------
    let gstage = stage_seed(master, "generate");
    println!("tmpl |  rand(own)   lc/rnd      as/rnd      cs/rnd      at/rnd   (kept-CR guided vs paired random)");
    let mut beats = [0usize; 4];
    for &t in &templates {
        let mut row = format!("  t{t} |");
        for (gi, gen) in [GeneratorId::Lc, GeneratorId::As, GeneratorId::Cs, GeneratorId::At]
            .iter()
            .enumerate()
        {
            let seed = task_seed(gstage, t, 0, gen.name());
            let mk = || GenerationTask {
                template_id: t,
                route_id: 0,
                surrogate: agent.clone(),
                budget: 100,
                keep_k: 10,
                seed,
            };
            let t1 = Instant::now();
            let guided = generate(&mk(), *gen)?;
            let gsecs = t1.elapsed().as_secs_f64();
            let t2 = Instant::now();
            let paired = generate(&mk(), GeneratorId::Random)?;
            let rsecs = t2.elapsed().as_secs_f64();
            let cr = |run: &precrash_core::generation::GenerationRun| {
                if run.kept.is_empty() {
                    return -1.0;
                }
                run.kept.iter().filter(|e| e.collision).count() as f64 / run.kept.len() as f64
            };
            let raw = paired
                .log
                .iter()
                .filter(|l| l.feasible && l.objective >= 1.0)
                .count();
            let (g, r) = (cr(&guided), cr(&paired));
            if g > r {
                beats[gi] += 1;
            }
            let _ = (gsecs, rsecs);
            row.push_str(&format!(
                " {:.2}/{:.2}{}(m{raw:02})",
                g,
                r,
                if g > r { "+" } else if g < r { "-" } else { "=" },
            ));
        }
        println!("{row}");
    }
    println!(
        "beats random on N/8 templates: lc={} as={} cs={} at={}",
        beats[0], beats[1], beats[2], beats[3]
    );
    Ok(())
}
