//! Each workload runs on a one-thread pool and on the default pool. Built
//! with `--no-default-features`, both arms run the sequential code path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use emblens_core::cluster::{kmeans, KMeansConfig};
use emblens_core::geometry::silhouette;
use emblens_core::par;
use emblens_core::partition_metrics::{contingency, expected_mutual_information};
use emblens_core::reduce::exact_knn;
use emblens_core::synth::{self, SynthConfig};
use emblens_core::{EmbeddingSet, Partition};

fn fixture(n: usize) -> (EmbeddingSet, Partition) {
    let cfg = SynthConfig {
        n_samples: n,
        n_milestones: 2,
        seed: 1,
        ..SynthConfig::default()
    };
    let m = synth::generate_trajectory(&cfg).unwrap().pop().unwrap();
    (m.embeddings, m.ground_truth.unwrap())
}

fn arms(c: &mut Criterion, name: &str, work: impl Fn() + Sync) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    for (label, jobs) in [("sequential", Some(1)), ("parallel", None)] {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| par::with_jobs(jobs, &work))
        });
    }
    group.finish();
}

fn benches(c: &mut Criterion) {
    let (e, gt) = fixture(2000);
    arms(c, "silhouette_n2000", || {
        black_box(silhouette(&e, &gt).unwrap());
    });
    arms(c, "knn_graph_n2000_k50", || {
        black_box(exact_knn(&e, 50));
    });
    let cfg = KMeansConfig {
        k: 10,
        n_restarts: 8,
        ..KMeansConfig::default()
    };
    arms(c, "kmeans_k10_restarts8", || {
        black_box(kmeans(&e, &cfg).unwrap());
    });
    let c2 = kmeans(&e, &KMeansConfig { k: 20, ..cfg }).unwrap().partition;
    let table = contingency(&gt, &c2).unwrap();
    arms(c, "emi_10x20", || {
        black_box(expected_mutual_information(&table));
    });
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
