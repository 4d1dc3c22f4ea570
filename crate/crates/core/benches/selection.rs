use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use balsub::dataset::{gen_case2, LevelSpec};
use balsub::selector::{balanced_select, rescore, SelectionConfig};

/// Balanced selection with the parallel scan against the sequential
/// fallback, at a size where one selection takes a few milliseconds.
fn bench_scan_paths(c: &mut Criterion) {
    let spec = LevelSpec::new(vec![2, 3, 4, 5, 6]).unwrap();
    let data = gen_case2(50_000, &spec, 7).unwrap();
    let mut group = c.benchmark_group("balanced_select");
    for &parallel in &[true, false] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::new(label, 64), &parallel, |b, &parallel| {
            let mut config = SelectionConfig::new(64, 11);
            config.parallel = parallel;
            b.iter(|| balanced_select(&data, &config).unwrap());
        });
    }
    group.finish();
}

/// The incremental path against batch rescoring of the same selection;
/// the gap is the point of the incremental update rule.
fn bench_incremental_vs_batch(c: &mut Criterion) {
    let spec = LevelSpec::new(vec![3, 4, 5]).unwrap();
    let data = gen_case2(20_000, &spec, 3).unwrap();
    let config = SelectionConfig::new(48, 5);
    let chosen = balanced_select(&data, &config).unwrap().indices().to_vec();
    let mut group = c.benchmark_group("scoring");
    group.bench_function("incremental_full_selection", |b| {
        b.iter(|| balanced_select(&data, &config).unwrap())
    });
    group.bench_function("batch_rescore_once", |b| {
        b.iter(|| rescore(&data, &chosen).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_scan_paths, bench_incremental_vs_batch);
criterion_main!(benches);
