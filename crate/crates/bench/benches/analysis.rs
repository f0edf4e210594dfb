use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fbascope::Analyzer;
use fbascope_bench::{mobilecoin_fbas, org_structured, symmetric};

fn minimal_quorums(c: &mut Criterion) {
    let mut group = c.benchmark_group("minimal_quorums");
    for n in [10usize, 14, 18] {
        let fbas = symmetric(n, (2 * n / 3 + 1) as u32);
        group.bench_with_input(BenchmarkId::new("symmetric", n), &fbas, |b, fbas| {
            b.iter(|| Analyzer::new(fbas).minimal_quorums().unwrap())
        });
    }
    let fbas = org_structured(5);
    group.bench_function("org_structured_5", |b| {
        b.iter(|| Analyzer::new(&fbas).minimal_quorums().unwrap())
    });
    group.finish();
}

fn blocking_and_splitting(c: &mut Criterion) {
    let fbas = mobilecoin_fbas();
    c.bench_function("mobilecoin_blocking", |b| {
        b.iter(|| Analyzer::new(&fbas).minimal_blocking_sets().unwrap())
    });
    c.bench_function("mobilecoin_splitting", |b| {
        b.iter(|| Analyzer::new(&fbas).minimal_splitting_sets().unwrap())
    });
    let reduced = fbas.reduce_thresholds(1).fbas;
    c.bench_function("mobilecoin_reduced_splitting", |b| {
        b.iter(|| Analyzer::new(&reduced).minimal_splitting_sets().unwrap())
    });
}

criterion_group!(benches, minimal_quorums, blocking_and_splitting);
criterion_main!(benches);
