use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use causal_rd::causal_filter::{simulate_pipeline, stationary_solution, FilterOptions};
use causal_rd::exec::Execution;
use causal_rd::kernel::{solve_for_distortion, KernelOptions};
use causal_rd::numerics::Matrix;
use causal_rd::rd_curve::{sweep, zero_rate_distortion};
use causal_rd::source_model::{FiniteSource, GaussMarkovSource};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn gauss_source() -> GaussMarkovSource {
    let a = Matrix::from_rows(&[vec![0.9, 0.2, 0.0], vec![0.0, 0.7, 0.1], vec![0.1, 0.0, 0.5]]).unwrap();
    let b = Matrix::identity(3);
    let c = Matrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.3]]).unwrap();
    let n = Matrix::from_diag(&[0.3, 0.4]);
    GaussMarkovSource::new(a, b, c, n, vec![0.0; 3], Matrix::zeros(3, 3)).unwrap()
}

fn rd_sweep(c: &mut Criterion) {
    let source = gauss_source();
    let opts = FilterOptions::unit_channel(2);
    let top = zero_rate_distortion(&source, &opts).unwrap();
    let grid: Vec<f64> = (1..=64).map(|k| top * k as f64 / 65.0).collect();
    let mut group = c.benchmark_group("rd_sweep_64");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(&source, &grid, &opts, exec).unwrap())
        });
    }
    group.finish();
}

fn multi_seed_simulation(c: &mut Criterion) {
    let source = gauss_source();
    let opts = FilterOptions::unit_channel(2);
    let sol = stationary_solution(&source, 0.5, &opts).unwrap();
    let seeds: Vec<u64> = (1..=8).collect();
    let mut group = c.benchmark_group("simulate_8_seeds");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(&seeds, |&s| simulate_pipeline(&source, &sol, 20_000, s).unwrap()))
        });
    }
    group.finish();
}

fn kernel_grid(c: &mut Criterion) {
    let rows = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
    let source = FiniteSource::new(
        vec![0.6, 0.4],
        Matrix::from_rows(&rows).unwrap(),
        FiniteSource::hamming(2),
        3,
    )
    .unwrap();
    let targets: Vec<f64> = (1..=8).map(|k| 0.03 * k as f64).collect();
    let opts = KernelOptions::default();
    let mut group = c.benchmark_group("solve_kernel_8_targets");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(&targets, |&d| solve_for_distortion(&source, d, &opts).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, rd_sweep, multi_seed_simulation, kernel_grid);
criterion_main!(benches);
