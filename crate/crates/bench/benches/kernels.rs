use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use postsel_bench::{skin_fixture, test_matrix};
use postsel_core::gaussian::{entanglement_entropy, GaussianEngine};
use postsel_core::linalg::matrix_exponential;
use postsel_core::master_eq::{nlme_rhs, DensityMatrix};
use postsel_core::rng::trajectory_rng;
use postsel_core::trajectory::fock_embed;

fn expm(c: &mut Criterion) {
    let mut group = c.benchmark_group("expm");
    for n in [8, 32, 64] {
        let a = test_matrix(n, 2.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| matrix_exponential(black_box(a)).unwrap())
        });
    }
    group.finish();
}

fn gaussian_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian_step");
    for sites in [20, 50, 100] {
        let (spec, state) = skin_fixture(sites);
        let mut engine = GaussianEngine::new(&spec, 0.005).unwrap();
        let mut rng = trajectory_rng(0, 0);
        let mut s = state.clone();
        group.bench_function(BenchmarkId::from_parameter(sites), |b| {
            b.iter(|| engine.step(&mut s, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn half_chain_entropy(c: &mut Criterion) {
    let (spec, mut state) = skin_fixture(100);
    let mut engine = GaussianEngine::new(&spec, 0.005).unwrap();
    let mut rng = trajectory_rng(0, 1);
    for _ in 0..2000 {
        engine.step(&mut state, &mut rng).unwrap();
    }
    c.bench_function("entropy/L100", |b| {
        b.iter(|| entanglement_entropy(black_box(&state), 51, 100).unwrap())
    });
}

fn nlme(c: &mut Criterion) {
    let mut group = c.benchmark_group("nlme_rhs");
    for sites in [4, 6] {
        let (spec, state) = skin_fixture(sites);
        let fock = fock_embed(&spec).unwrap();
        let rho = fock.slater_state(&state).unwrap().density_matrix().unwrap();
        // Mix in a little noise so the state is not sparse.
        let noise = test_matrix(fock.dim(), 1e-3).hermitian_part();
        let m = (rho.matrix() + &noise).hermitian_part();
        let m = m.scale_real(1.0 / m.trace().re);
        let rho = DensityMatrix::new(m).unwrap();
        group.bench_function(BenchmarkId::from_parameter(fock.dim()), |b| {
            b.iter(|| nlme_rhs(fock.spec(), black_box(rho.matrix())).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, expm, gaussian_step, half_chain_entropy, nlme);
criterion_main!(benches);
