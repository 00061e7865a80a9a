//! Parallel vs sequential throughput of the data-parallel inner loops:
//! dataset generation, L²-risk quadrature and the localization check.
//!
//! The `*_seq` helpers always exist; the dispatching versions use rayon
//! when the `parallel` feature (default) is on. Run with
//! `cargo bench -p cblab-core` and compare against
//! `cargo bench -p cblab-core --no-default-features`, or read the
//! `dispatch` vs `sequential` pairs within one run.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cblab_core::contrastive::ContrastiveTarget;
use cblab_core::erm::{check_localized, LocalizationSpec};
use cblab_core::evaluation::l2_risk;
use cblab_core::pairgen::{generate, GeneratorConfig};
use cblab_core::par;
use cblab_core::partition::{sinusoid_bands, BaseDensity};
use cblab_core::simplexnet::{MlpParams, SimplexNet};

fn fixture() -> (ContrastiveTarget, GeneratorConfig, SimplexNet) {
    let partition = sinusoid_bands(0.35, 0.65, 0.05).unwrap();
    let density = BaseDensity::uniform(2);
    let probs = partition
        .part_probabilities(&density, 100_000, 7)
        .unwrap()
        .probs;
    let cfg = GeneratorConfig::new(partition.clone(), density, 0.9, probs, 11).unwrap();
    let target = ContrastiveTarget::new(partition).unwrap();
    let mlp = MlpParams::he_init(vec![2, 8, 8, 8, 3], 10.0, 6.0, 3).unwrap();
    let net = SimplexNet::new(mlp, target.frame().clone()).unwrap();
    (target, cfg, net)
}

fn bench_chunked_sum(c: &mut Criterion) {
    let mut group = c.benchmark_group("chunked_sum");
    let n = 1_000_000usize;
    let f = |i: usize| ((i as f64) * 1e-4).sin().abs().sqrt();
    group.bench_with_input(BenchmarkId::new("dispatch", n), &n, |b, &n| {
        b.iter(|| black_box(par::sum_indexed(n, f)))
    });
    group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
        b.iter(|| black_box(par::sum_indexed_seq(n, f)))
    });
    group.finish();
}

fn bench_generate(c: &mut Criterion) {
    let (_, cfg, _) = fixture();
    let mut group = c.benchmark_group("dataset_generation");
    group.sample_size(20);
    let n = 20_000usize;
    group.bench_with_input(BenchmarkId::new("dispatch", n), &n, |b, &n| {
        b.iter(|| black_box(generate(&cfg, n).unwrap()))
    });
    group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
        b.iter(|| {
            // Per-index streams make the sequential reference a plain loop
            // over the same per-sample draws.
            let samples: Vec<_> = (0..n)
                .map(|i| {
                    let mut rng = cblab_core::rng::stream(cfg.seed(), i as u64);
                    cblab_core::pairgen::sample_pair(&cfg, &mut rng).unwrap()
                })
                .collect();
            black_box(samples)
        })
    });
    group.finish();
}

fn bench_l2_risk(c: &mut Criterion) {
    let (target, _, net) = fixture();
    let density = BaseDensity::uniform(2);
    let mut group = c.benchmark_group("l2_risk_grid");
    group.sample_size(20);
    group.bench_function("dispatch_65536_nodes", |b| {
        b.iter(|| black_box(l2_risk(&net, &target, &density, 65_536, 5).unwrap()))
    });
    group.finish();
}

fn bench_localization(c: &mut Criterion) {
    let (target, _, net) = fixture();
    let density = BaseDensity::uniform(2);
    let spec = LocalizationSpec {
        beta: 0.5 * target.frame().dproj(),
        beta0: 0.1,
        eval_points: 50_000,
        seed: 9,
    };
    let mut group = c.benchmark_group("localization_check");
    group.sample_size(20);
    group.bench_function("dispatch_50000_points", |b| {
        b.iter(|| black_box(check_localized(&net, &target, &spec, &density).unwrap()))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_chunked_sum,
    bench_generate,
    bench_l2_risk,
    bench_localization
);
criterion_main!(benches);
