use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncg_bench::{gaussian_vector, linear_spectrum, nls_problem, planted_matrix};
use ncg_core::{capped_cg, meo_lanczos, CappedCgParams, IndexSet, ObjectiveOracle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn bench_capped_cg(c: &mut Criterion) {
    let mut group = c.benchmark_group("capped_cg");
    for d in [50, 200] {
        let h = planted_matrix(&linear_spectrum(d, 0.01, 10.0), 1);
        let g = gaussian_vector(d, 2);
        let params = CappedCgParams::new(0.01, 0.5);
        group.bench_with_input(BenchmarkId::new("sol", d), &d, |b, _| {
            b.iter(|| capped_cg(black_box(&h), black_box(&g), &params).unwrap())
        });
        let mut eigs = linear_spectrum(d, 0.01, 10.0);
        eigs[0] = -1.0;
        let h = planted_matrix(&eigs, 3);
        group.bench_with_input(BenchmarkId::new("nc", d), &d, |b, _| {
            b.iter(|| capped_cg(black_box(&h), black_box(&g), &params).unwrap())
        });
    }
    group.finish();
}

fn bench_meo(c: &mut Criterion) {
    let mut group = c.benchmark_group("meo_lanczos");
    for d in [50, 200] {
        let h = planted_matrix(&linear_spectrum(d, 0.0, 1.0), 4);
        group.bench_with_input(BenchmarkId::new("certify", d), &d, |b, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            b.iter(|| meo_lanczos(black_box(&h), 1.0, 0.1, 0.05, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn bench_nls_hvp(c: &mut Criterion) {
    let mut group = c.benchmark_group("nls_hvp");
    let o = ObjectiveOracle::new(nls_problem(10_000, 22, 6));
    let x = gaussian_vector(22, 7);
    let v = gaussian_vector(22, 8);
    group.bench_function("full", |b| {
        b.iter(|| o.eval_hvp(black_box(&x), black_box(&v), &IndexSet::All).unwrap())
    });
    let subset = IndexSet::Subset((0..10_000).step_by(100).collect());
    group.bench_function("batch_100", |b| {
        b.iter(|| o.eval_hvp(black_box(&x), black_box(&v), &subset).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_capped_cg, bench_meo, bench_nls_hvp);
criterion_main!(benches);
