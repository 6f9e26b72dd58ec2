use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use entity_sampler::balanced::{estimate_probs_balanced, goodman_estimate, FingerprintStats};
use entity_sampler::gmm::{em_fit, MixtureModel};
use entity_sampler::harness::synthetic::{publications_like, sensor_like, tpch_lineitem};
use entity_sampler::harness::{inject_duplicates, DupProfile};
use entity_sampler::lsh::kmeans::{regularized_kmeans_matrix, SquaredDistances};
use entity_sampler::lsh::{choose_bands_rows, lsh_partition, HashFamily, KMeansOptions};

fn balanced(c: &mut Criterion) {
    let clean = tpch_lineitem(100_000, 1);
    let data = inject_duplicates(&clean, 0.2, DupProfile::Tpch, 2).unwrap();
    let mut group = c.benchmark_group("estimate_probs_balanced");
    // below n draws record by record, above it per-class binomials
    for m in [10_000u64, 1_000_000] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| estimate_probs_balanced(&data, m, black_box(3)).unwrap())
        });
    }
    group.finish();
}

fn goodman(c: &mut Criterion) {
    let sample: Vec<u32> = (0..5_000u32).map(|i| i % 1_700).collect();
    let stats = FingerprintStats::from_sample(sample);
    c.bench_function("goodman_m5000", |b| b.iter(|| goodman_estimate(black_box(&stats), 50_000).unwrap()));
}

fn blocking(c: &mut Criterion) {
    let data = publications_like(2_000, 0.3, 4);
    let cfg = choose_bands_rows(0.2, 0.1).unwrap().with_family(HashFamily::MinHash);
    c.bench_function("lsh_partition_publications", |b| {
        b.iter(|| lsh_partition(&data, &cfg, black_box(5)).unwrap())
    });
}

fn kmeans(c: &mut Criterion) {
    let pts: Vec<[f64; 2]> = (0..200)
        .map(|i| {
            let c = (i % 4) as f64 * 5.0;
            let t = i as f64 * 0.37;
            [c + t.sin() * 0.8, c + t.cos() * 0.8]
        })
        .collect();
    let d2 = SquaredDistances::from_fn(pts.len(), |a, b| {
        ((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt()
    });
    let opts = KMeansOptions::default();
    c.bench_function("regularized_kmeans_200", |b| {
        b.iter(|| regularized_kmeans_matrix(&d2, 4, 1.0, black_box(&opts)).unwrap())
    });
}

fn em(c: &mut Criterion) {
    let model = MixtureModel::new(vec![0.4, 0.6], vec![vec![-4.0, 0.0], vec![4.0, 1.0]], vec![1.0, 2.0]).unwrap();
    let data = sensor_like(&model, 20_000, 0.01, 6);
    c.bench_function("em_fit_20k_2d", |b| b.iter(|| em_fit(&data, 2, 200, 1e-6, black_box(7)).unwrap()));
}

criterion_group!(benches, balanced, goodman, blocking, kmeans, em);
criterion_main!(benches);
