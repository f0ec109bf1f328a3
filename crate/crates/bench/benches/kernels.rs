use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rotmaster::expm::expm;
use rotmaster::lindblad::{propagate, rhs_into, uniform_grid, PropagateOptions, RhsWorkspace};
use rotmaster::trajectories::{run_ensemble, TrajectoryOptions};
use rotmaster_bench::kerr;

fn lindblad_rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for j_max in [8, 12, 16] {
        let f = kerr(j_max, 0.1, 0.01);
        let ops = f.model.generator().at(0.0);
        let sigma = f.model.restrict_density(&f.rho0).expect("in sector");
        let mut out = Array2::zeros(sigma.raw_dim());
        let mut ws = RhsWorkspace::new(&ops);
        group.bench_with_input(BenchmarkId::from_parameter(sigma.nrows()), &sigma, |b, s| {
            b.iter(|| rhs_into(&ops, &s.view(), &mut out, &mut ws))
        });
    }
    group.finish();
}

fn dense_expm(c: &mut Criterion) {
    let mut group = c.benchmark_group("expm");
    for n in [16, 64, 128] {
        let a = Array2::from_shape_fn((n, n), |(r, k)| C64::new(((r * 7 + k * 3) % 11) as f64 / 11.0 - 0.5, ((r + k) % 5) as f64 / 10.0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| b.iter(|| expm(a)));
    }
    group.finish();
}

fn lindblad_propagation(c: &mut Criterion) {
    let f = kerr(12, 0.1, 0.01);
    let grid = uniform_grid(2.0, 201);
    let options = PropagateOptions::default();
    let mut group = c.benchmark_group("propagate");
    group.sample_size(10);
    group.bench_function("kerr_j12_tau2", |b| b.iter(|| propagate(&f.model, &f.rho0, &grid, &options).expect("runs")));
    group.finish();
}

fn trajectory_ensemble(c: &mut Criterion) {
    let f = kerr(12, 0.1, 0.01);
    let grid = uniform_grid(2.0, 201);
    let options = TrajectoryOptions::default();
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    group.bench_function("kerr_j12_tau2_n200", |b| {
        b.iter(|| run_ensemble(&f.model, &f.psi0, &grid, 1234, 200, &options).expect("runs"))
    });
    group.finish();
}

criterion_group!(benches, lindblad_rhs, dense_expm, lindblad_propagation, trajectory_ensemble);
criterion_main!(benches);
