use criterion::{criterion_group, criterion_main, Criterion};
use orps_bench::bench_system;
use orps_core::corpus::affine_certified;
use orps_core::{
    solve_linear_periodic, solve_semilinear_picard, PicardConfig, PicardWorkspace,
    QuadratureConfig,
};

fn bench_linear_solve(c: &mut Criterion) {
    let sys = bench_system();
    let quad = QuadratureConfig::default();
    c.bench_function("solve_linear_periodic", |b| {
        b.iter(|| solve_linear_periodic(&sys, &quad).unwrap())
    });
}

fn bench_picard(c: &mut Criterion) {
    let sys = affine_certified(7, 0.5);
    let cfg = PicardConfig {
        max_grid_refinements: 0,
        ..Default::default()
    };
    c.bench_function("picard_workspace_build", |b| {
        b.iter(|| PicardWorkspace::new(&sys, cfg.grid, cfg.quad).unwrap())
    });
    let ws = PicardWorkspace::new(&sys, cfg.grid, cfg.quad).unwrap();
    let y = ws.zero_trajectory();
    c.bench_function("picard_apply", |b| b.iter(|| ws.apply(&y).unwrap()));
    c.bench_function("picard_solve_full", |b| {
        b.iter(|| solve_semilinear_picard(&sys, &cfg).unwrap())
    });
}

criterion_group!(benches, bench_linear_solve, bench_picard);
criterion_main!(benches);
