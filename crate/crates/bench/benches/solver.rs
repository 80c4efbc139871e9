use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fragstat_core::kernels::CoefficientSpec;
use fragstat_core::solver::{assemble_operator, build_grid, solve_conservative, solve_nullspace, SolverConfig};

fn solvers(c: &mut Criterion) {
    let spec = CoefficientSpec::power_law(1.0, 0.0, 0.0).unwrap();
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    for n in [256, 512, 1024, 2048] {
        let cfg = SolverConfig::with_n(n);
        g.bench_with_input(BenchmarkId::new("nullspace", n), &cfg, |b, cfg| {
            b.iter(|| solve_nullspace(&spec, cfg).unwrap())
        });
    }
    for n in [256, 1024] {
        let cfg = SolverConfig::with_n(n);
        g.bench_with_input(BenchmarkId::new("conservative", n), &cfg, |b, cfg| {
            b.iter(|| solve_conservative(&spec, cfg).unwrap())
        });
    }
    g.finish();

    let grid = build_grid(&spec, &SolverConfig::with_n(1024)).unwrap();
    c.bench_function("assemble_1024", |b| b.iter(|| assemble_operator(&spec, &grid).unwrap()));
}

criterion_group!(benches, solvers);
criterion_main!(benches);
