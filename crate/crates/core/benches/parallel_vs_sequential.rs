use std::hint::black_box;
use std::sync::Arc;

use catapult_core::experiments::beta_grid;
use catapult_core::models::{generate_sparse_regression, DatasetConfig, DiagonalNet, ScalarRelu};
use catapult_core::optim::{run, RunConfig, Schedule};
use catapult_core::par;
use catapult_core::spectral::SharpnessProbe;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn scalar_final_u(beta: f64) -> f64 {
    let eta = 0.0201;
    let cfg = RunConfig::new(Schedule::constant((1.0 + beta) * eta), beta, 20_000);
    run(&ScalarRelu, &[10.0, 1e-6], &cfg).unwrap().final_theta[0]
}

fn beta_runs(c: &mut Criterion) {
    let betas = beta_grid(0.1, 0.9);
    let mut g = c.benchmark_group("beta_runs");
    g.sample_size(10);
    g.bench_with_input(BenchmarkId::new("parallel", betas.len()), &betas, |b, betas| {
        b.iter(|| black_box(par::map(betas, |&beta| scalar_final_u(beta))))
    });
    g.bench_with_input(BenchmarkId::new("sequential", betas.len()), &betas, |b, betas| {
        b.iter(|| black_box(par::map_sequential(betas, |&beta| scalar_final_u(beta))))
    });
    g.finish();
}

fn sharpness_probes(c: &mut Criterion) {
    let data = Arc::new(generate_sparse_regression(&DatasetConfig::sparse_default(0)).unwrap());
    let model = DiagonalNet::new(data);
    let points: Vec<Vec<f64>> = (0..16)
        .map(|i| {
            let a = 0.05 + 0.02 * i as f64;
            vec![a; 200]
        })
        .collect();
    let mut g = c.benchmark_group("sharpness_probes");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| {
            black_box(par::map(&points, |p| {
                SharpnessProbe::default().probe(&model, p).value
            }))
        })
    });
    g.bench_function("sequential", |b| {
        b.iter(|| {
            black_box(par::map_sequential(&points, |p| {
                SharpnessProbe::default().probe(&model, p).value
            }))
        })
    });
    g.finish();
}

criterion_group!(benches, beta_runs, sharpness_probes);
criterion_main!(benches);
