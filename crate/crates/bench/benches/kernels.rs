use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Matrix3;
use rotonly_bench::circle_graph;
use rotonly_core::epipolar::{edge_cost, smallest_eigenvalue, MMatrix};
use rotonly_core::optimizer::{cost_and_gradient, OptimizerConfig};
use rotonly_core::Rotation;

fn eigenvalue(c: &mut Criterion) {
    let m = MMatrix(Matrix3::new(4.0, 1.0, 0.5, 1.0, 3.0, 0.25, 0.5, 0.25, 2.0));
    c.bench_function("smallest_eigenvalue", |b| {
        b.iter(|| smallest_eigenvalue(black_box(&m)))
    });
}

fn single_edge(c: &mut Criterion) {
    let g = circle_graph(10);
    let e = &g.edges[0];
    let r = g.initial_rotations[e.j].between(&g.initial_rotations[e.k]);
    c.bench_function("edge_cost", |b| {
        b.iter(|| edge_cost(black_box(&r), black_box(&e.moments), true))
    });
}

fn full_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("cost_and_gradient");
    for n in [20, 100, 400] {
        let g = circle_graph(n);
        let rs: Vec<Rotation> = g.initial_rotations.clone();
        for (label, approximate_gradient) in [("approximate", true), ("exact", false)] {
            let cfg = OptimizerConfig {
                approximate_gradient,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(label, g.n_edges()), &g, |b, g| {
                b.iter(|| cost_and_gradient(black_box(&rs), g, &cfg))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, eigenvalue, single_edge, full_gradient);
criterion_main!(benches);
