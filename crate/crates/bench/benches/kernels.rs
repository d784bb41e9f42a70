use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use specmatch::spectral::{compute_spectra, EigOptions};
use specmatch::workload::{bench_pair, sphere_near};
use std::hint::black_box;

// Kept small so a full run finishes in minutes on one core; the CLI bench
// covers the 1000/2000/5000 sizes.
const SIZES: [usize; 2] = [500, 1000];
const K: usize = 100;

fn fmap_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("fmap");
    g.sample_size(10);
    for n in SIZES {
        let pair = bench_pair(n, K, 0).unwrap();
        let c_yx = pair.projection().unwrap();
        g.bench_with_input(BenchmarkId::new("projection", n), &pair, |b, p| {
            b.iter(|| black_box(p.projection().unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("baseline_solver", n), &pair, |b, p| {
            b.iter(|| black_box(p.baseline_solver().unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("nn_search", n), &pair, |b, p| {
            b.iter(|| black_box(p.nn_search(&c_yx).unwrap()))
        });
    }
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let pair = bench_pair(500, K, 0).unwrap();
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("train_step/500", |b| b.iter(|| black_box(pair.train_step().unwrap())));
    g.finish();
}

fn eigensolve(c: &mut Criterion) {
    let mesh = sphere_near(1000).unwrap();
    let mut g = c.benchmark_group("spectral");
    g.sample_size(10);
    g.bench_function("eig_k/1000/k50", |b| {
        b.iter(|| black_box(compute_spectra(&mesh, 50, &EigOptions::default()).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, fmap_kernels, train_step, eigensolve);
criterion_main!(benches);
