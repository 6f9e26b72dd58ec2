use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use entity_sampler::balanced::estimate_probs_balanced;
use entity_sampler::harness::synthetic::{population, ratio_counts, tpch_lineitem};
use entity_sampler::harness::{inject_duplicates, DupProfile};
use entity_sampler::{induced_tv_to_uniform, sample_clean, ProbabilityMap};

fn rejection(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_clean");
    for ratio in [1u64, 10] {
        let data = population(&ratio_counts(1_000, ratio, 20), 1);
        let map = ProbabilityMap::exact(&data).unwrap();
        group.throughput(Throughput::Elements(10_000));
        group.bench_with_input(BenchmarkId::new("ratio", ratio), &ratio, |b, _| {
            b.iter(|| sample_clean(&data, &map, 10_000, black_box(7)).unwrap())
        });
    }
    group.finish();
}

fn induced_tv(c: &mut Criterion) {
    let clean = tpch_lineitem(200_000, 3);
    let data = inject_duplicates(&clean, 0.2, DupProfile::Tpch, 4).unwrap();
    let map = estimate_probs_balanced(&data, 20_000, 5).unwrap();
    c.bench_function("induced_tv_200k", |b| b.iter(|| induced_tv_to_uniform(&data, black_box(&map)).unwrap()));
}

criterion_group!(benches, rejection, induced_tv);
criterion_main!(benches);
