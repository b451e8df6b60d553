use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use polaron_core::correlation::vv_correlation;
use polaron_core::{
    build_e, diffusion, matrix_exp, solve, AMatrix, CorrelationContext, CorrelationEngine, EngineSettings, ModelParams,
    TransportSettings,
};

fn params(n: usize, g2: f64, phi2: f64) -> ModelParams {
    ModelParams { n_sites: n, ..Default::default() }.with_squared_couplings(g2, phi2)
}

fn expm(c: &mut Criterion) {
    let mut group = c.benchmark_group("matrix_exp");
    for n in [4, 8, 16, 32] {
        let p = params(n, 0.5, 0.3);
        let e = build_e(&AMatrix::from_coupling(&p), &p, 0.7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &e, |b, e| b.iter(|| matrix_exp(&e.q(1).view()).unwrap()));
    }
    group.finish();
}

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for n in [8, 16, 32] {
        let p = params(n, 0.1, 0.3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| b.iter(|| solve(black_box(p), None).unwrap()));
    }
    group.finish();
}

fn correlators(c: &mut Criterion) {
    let mut group = c.benchmark_group("correlator");
    group.sample_size(10);
    for (name, phi2) in [("uniform", 0.0), ("general", 0.3)] {
        let s = solve(&params(4, 0.5, phi2), None).unwrap();
        let ctx = CorrelationContext::from_solution(&s).unwrap();
        let tuples: Vec<[usize; 4]> = (0..4).flat_map(|k| (0..4).map(move |kp| [k, kp, kp, k])).collect();
        group.bench_function(BenchmarkId::new("engine_build", name), |b| {
            b.iter(|| CorrelationEngine::new(ctx.clone(), tuples.clone(), EngineSettings::default()).unwrap())
        });
        let engine = CorrelationEngine::new(ctx.clone(), tuples.clone(), EngineSettings::default()).unwrap();
        group.bench_function(BenchmarkId::new("engine_eval", name), |b| b.iter(|| engine.vv(0, black_box(1.3))));
        group.bench_function(BenchmarkId::new("literal", name), |b| {
            b.iter(|| vv_correlation(&ctx, 0, 1, 1, 0, black_box(1.3)).unwrap())
        });
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let mut group = c.benchmark_group("diffusion");
    group.sample_size(10);
    let s = solve(&params(4, 0.5, 0.0), None).unwrap();
    group.bench_function("n4_uniform", |b| b.iter(|| diffusion(&s, &TransportSettings::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, expm, solver, correlators, transport);
criterion_main!(benches);
