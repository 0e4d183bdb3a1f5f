use criterion::{criterion_group, criterion_main, Criterion};

use statgeo_bench::scenario;
use statgeo_core::solver;

fn bench_solves(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for name in ["minkowski", "minkowski-sphere-point", "boost-cylinders"] {
        let s = scenario(name);
        group.bench_function(name, |b| {
            b.iter(|| {
                solver::solve_normal_geodesic(&s.metric, &s.boundary, &s.params)
                    .expect("benchmark scenarios certify")
            })
        });
    }
    group.finish();
}

criterion_group!(solves, bench_solves);
criterion_main!(solves);
