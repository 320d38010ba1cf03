use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fdpsgd_core::sim::{
    run_simulation, ClientConfig, ClipSchedule, DatasetSpec, IsrMode, SamplingMode, ServerConfig,
    SimConfig,
};
use fdpsgd_core::{cp_operator, gaussian_curve, group_curve, Pld, PldOptions, RoundSpec};
use std::hint::black_box;

fn pld_compose(c: &mut Criterion) {
    let mut g = c.benchmark_group("pld_compose");
    g.sample_size(10);
    for t in [100u64, 1000, 10_000] {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            let spec = RoundSpec::new(0.01, 2.0, t).unwrap();
            b.iter(|| Pld::compose(black_box(&[spec]), &PldOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn curves(c: &mut Criterion) {
    let g1 = gaussian_curve(1.0).unwrap();
    c.bench_function("cp_operator p=0.1", |b| {
        b.iter(|| cp_operator(black_box(&g1), 0.1).unwrap())
    });
    c.bench_function("group_curve g=4", |b| {
        b.iter(|| group_curve(black_box(&g1), 4).unwrap())
    });
}

fn simulate(c: &mut Criterion) {
    let cfg = SimConfig {
        seed: 1,
        clients: vec![ClientConfig {
            m: 16,
            epochs: 5,
            clip: ClipSchedule::Constant { c: 1.0 },
            sigma: 2.0,
            sampling: SamplingMode::Fixed,
            staleness_bound: None,
            isr_mode: IsrMode::Immediate,
            seed: None,
            noise_shaping: None,
            target_delta: 1e-5,
            budget_eps: None,
        }],
        server: ServerConfig::default(),
        data: vec![DatasetSpec {
            d: 2,
            margin: 2.0,
            scale: 0.5,
            n: 4096,
            n_test: 1024,
            label_flip: 0.0,
            seed: 1,
        }],
        log_rounds: false,
    };
    c.bench_function("simulate 1 client E=5", |b| {
        b.iter(|| run_simulation(black_box(&cfg)).unwrap())
    });
}

criterion_group!(benches, pld_compose, curves, simulate);
criterion_main!(benches);
