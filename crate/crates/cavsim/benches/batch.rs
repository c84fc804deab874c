//! Throughput of the delayed-choice batch runner: the rayon path against
//! the sequential one, at two batch sizes. Both paths produce identical
//! records; the comparison is purely about speed.

use std::f64::consts::TAU;

use cavsim::engine::{build_timeline, run_batch, run_batch_sequential, TimelineSpec};
use cavsim::model::PhysicalParams;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_params() -> PhysicalParams {
    // lossless and short-windowed: setup stays cheap, so the measurement
    // tracks the per-trial sampling work the two paths split differently
    let mut p = PhysicalParams::reference();
    p.kappa = 0.0;
    p.gamma = 0.0;
    p.fock_cutoff = 2;
    p
}

fn bench_spec() -> TimelineSpec {
    TimelineSpec {
        probe_width: 5e-6,
        interaction_cycles: Some(2),
        ..TimelineSpec::reference()
    }
}

fn batch(c: &mut Criterion) {
    let params = bench_params();
    let timeline = build_timeline(&params, &bench_spec()).unwrap();
    let thetas: Vec<f64> = (0..16).map(|k| k as f64 * TAU / 16.0).collect();

    let mut group = c.benchmark_group("run_batch");
    group.sample_size(20);
    for trials_per_point in [1_000usize, 10_000] {
        group.bench_with_input(
            BenchmarkId::new("parallel", trials_per_point),
            &trials_per_point,
            |b, &n| b.iter(|| run_batch(&params, &timeline, &thetas, n, 7).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", trials_per_point),
            &trials_per_point,
            |b, &n| b.iter(|| run_batch_sequential(&params, &timeline, &thetas, n, 7).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
