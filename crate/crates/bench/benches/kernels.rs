use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use orps_bench::{bench_matrix, bench_system};
use orps_core::{expm, kernel_grid_lhs, kernel_h, KernelVariant, QuadratureConfig};

fn bench_expm(c: &mut Criterion) {
    let mut group = c.benchmark_group("expm");
    for n in [2usize, 4, 6, 12] {
        let a = bench_matrix(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| expm(a, 1.7, 1e-13).unwrap())
        });
    }
    group.finish();
}

fn bench_kernel_eval(c: &mut Criterion) {
    let sys = bench_system();
    let omega = sys.omega();
    c.bench_function("kernel_h_single", |b| {
        b.iter(|| kernel_h(&sys, 0.61 * omega, 0.37 * omega).unwrap())
    });
    let ts: Vec<f64> = (0..64).map(|k| omega * (k as f64 / 63.0)).collect();
    let quad = QuadratureConfig::default();
    c.bench_function("kernel_grid_lhs_64", |b| {
        b.iter(|| kernel_grid_lhs(&sys, &ts, &quad, KernelVariant::General).unwrap())
    });
}

criterion_group!(benches, bench_expm, bench_kernel_eval);
criterion_main!(benches);
