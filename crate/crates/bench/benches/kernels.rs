use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use statgeo_bench::scenario;
use statgeo_core::fermat::{fermat_length, FermatSide, FermatStructure};
use statgeo_core::reduction::{self, ReducedState};
use statgeo_core::spacetime::SpacetimePoint;

fn bench_eval_j_and_grad(c: &mut Criterion) {
    let m = scenario("rotating").metric;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rs = statgeo_core::scenarios::random_reduced_state(&m, 64, &mut rng);

    c.bench_function("eval_j rotating N=64", |b| {
        b.iter(|| reduction::eval_j(&m, black_box(&rs.x), black_box(rs.delta)))
    });
    c.bench_function("grad_j rotating N=64", |b| {
        b.iter(|| reduction::grad_j(&m, black_box(&rs.x), black_box(rs.delta)))
    });
}

fn bench_reconstruct_and_residual(c: &mut Criterion) {
    let m = scenario("static-well").metric;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rs = statgeo_core::scenarios::random_reduced_state(&m, 64, &mut rng);
    let rs = ReducedState::new(rs.x, 0.0, 0.4).unwrap();
    let curve = reduction::reconstruct_t(&m, &rs);

    c.bench_function("reconstruct_t static-well N=64", |b| {
        b.iter(|| reduction::reconstruct_t(&m, black_box(&rs)))
    });
    c.bench_function("geodesic_residual static-well N=64", |b| {
        b.iter(|| m.geodesic_residual(black_box(&curve)).unwrap())
    });
}

fn bench_christoffel(c: &mut Criterion) {
    let m = scenario("rotating").metric;
    let p = SpacetimePoint::new(nalgebra::DVector::from_vec(vec![0.4, -0.3]), 0.0);
    c.bench_function("christoffel rotating", |b| {
        b.iter(|| m.christoffel(black_box(&p)).unwrap())
    });
}

fn bench_fermat_length(c: &mut Criterion) {
    let m = scenario("boost").metric;
    let fs = FermatStructure::new(m.clone(), FermatSide::Future);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = statgeo_core::scenarios::random_spatial_curve(&m, 128, &mut rng);
    c.bench_function("fermat_length boost N=128", |b| {
        b.iter(|| fermat_length(&fs, black_box(&x)))
    });
}

criterion_group!(
    kernels,
    bench_eval_j_and_grad,
    bench_reconstruct_and_residual,
    bench_christoffel,
    bench_fermat_length
);
criterion_main!(kernels);
