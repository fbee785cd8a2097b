use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gradflow_bench::{rolls, square};
use gradflow_core::{apply_lh, assemble_g, DgField};

fn bench_assemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_g");
    for cells in [16, 32, 64] {
        let space = square(cells, 2);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &space, |b, space| {
            b.iter(|| assemble_g(space, 1.0))
        });
    }
    group.finish();
}

fn bench_apply(c: &mut Criterion) {
    let space = square(64, 2);
    let g = assemble_g(&space, 1.0);
    let u = DgField::from_coeffs(&space, (0..space.n_dofs()).map(|i| (i as f64).sin()).collect()).unwrap();
    c.bench_function("apply_lh/64", |b| b.iter(|| apply_lh(&g, &u)));
}

fn bench_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("pc_step");
    group.sample_size(10);
    for tau in [0.1, 1.0] {
        let (stepper, state) = rolls(32, 2, "gl4").unwrap();
        group.bench_with_input(BenchmarkId::new("gl4_32", tau), &tau, |b, &tau| {
            b.iter(|| stepper.pc_step(&state, None, tau).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_assemble, bench_apply, bench_step);
criterion_main!(benches);
