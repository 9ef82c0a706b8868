//! Rayon fan-out vs. sequential mapping on representative workloads:
//! batched scenario rollouts (the generation hot loop) and batched
//! observation/forward passes (the evaluation hot loop).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use precrash_core::agents::EgoAgent;
use precrash_core::exec::{map_indexed, map_indexed_seq};
use precrash_core::generation::{evaluate_batch, GenerationTask};
use precrash_core::scenario::GeneratorId;
use std::hint::black_box;

fn rollout_batch(c: &mut Criterion) {
    let task = GenerationTask {
        template_id: 2,
        route_id: 0,
        surrogate: EgoAgent::RuleBased,
        budget: 64,
        keep_k: 8,
        seed: 17,
    };
    // One fixed batch of normalized parameter vectors.
    let dims = task.dims().unwrap();
    let units: Vec<Vec<f64>> = (0..64)
        .map(|i| {
            (0..dims)
                .map(|d| ((i * 7 + d * 13) % 101) as f64 / 100.0)
                .collect()
        })
        .collect();

    let mut group = c.benchmark_group("rollout_batch_64");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", "rayon"), |b| {
        b.iter(|| evaluate_batch(black_box(&task), GeneratorId::Random, 0, black_box(&units)).unwrap())
    });
    group.bench_function(BenchmarkId::new("sequential", "fallback"), |b| {
        b.iter(|| {
            // Same work, forced through the always-sequential path.
            let evals: Vec<_> = map_indexed_seq(units.len(), |i| {
                let sub = std::slice::from_ref(&units[i]);
                evaluate_batch(&task, GeneratorId::Random, i as u32, sub)
                    .unwrap()
                    .pop()
                    .unwrap()
            });
            evals
        })
    });
    group.finish();
}

fn float_kernel(c: &mut Criterion) {
    let work = |i: usize| {
        let mut acc = 0.0f64;
        for k in 0..20_000 {
            acc += ((i * 31 + k) as f64).sqrt().sin();
        }
        acc
    };
    let mut group = c.benchmark_group("float_kernel_256");
    group.bench_function("parallel", |b| {
        b.iter(|| map_indexed(256, |i| work(black_box(i))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| map_indexed_seq(256, |i| work(black_box(i))))
    });
    group.finish();

    // The two paths must agree bit-for-bit; a bench that compares different
    // answers measures nothing.
    let par = map_indexed(64, work);
    let seq = map_indexed_seq(64, work);
    assert_eq!(par, seq);
}

criterion_group!(benches, rollout_batch, float_kernel);
criterion_main!(benches);
