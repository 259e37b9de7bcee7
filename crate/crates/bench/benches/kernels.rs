use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorprop_core::prelude::*;
use tensorprop_core::synthetic::{two_class_corpus, SyntheticSpec};

fn corpus_tensor(articles_per_class: usize) -> SparseTensor {
    let corpus = two_class_corpus(&SyntheticSpec {
        articles_per_class,
        ..SyntheticSpec::default()
    });
    let vocab = build_vocabulary(&corpus, Some(5_000)).unwrap();
    build_cooccurrence_tensor(&corpus, &vocab, &TensorConfig::default()).unwrap()
}

fn random_points(n: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, dim, |_, _| rng.gen_range(-1.0..1.0))
}

fn bench_mttkrp(c: &mut Criterion) {
    let mut group = c.benchmark_group("mttkrp");
    for per_class in [100, 500] {
        let tensor = corpus_tensor(per_class);
        let [i, j, k] = tensor.dims();
        let factors = FactorMatrices::new(
            random_points(i, 10, 1),
            random_points(j, 10, 2),
            random_points(k, 10, 3),
        );
        for mode in [Mode::First, Mode::Third] {
            group.bench_with_input(
                BenchmarkId::new(format!("{mode:?}"), tensor.nnz()),
                &(&tensor, &factors),
                |b, (t, f)| b.iter(|| mttkrp(black_box(t), f, mode).unwrap()),
            );
        }
    }
    group.finish();
}

fn bench_cp_als(c: &mut Criterion) {
    let tensor = corpus_tensor(100);
    let config = CpConfig {
        max_iters: 10,
        ..CpConfig::default()
    };
    c.bench_function("cp_als/10-sweeps", |b| {
        b.iter(|| cp_als(black_box(&tensor), &config).unwrap())
    });
}

fn bench_knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_graph");
    for n in [1_000, 5_000] {
        let points = random_points(n, 10, 4);
        for backend in [Backend::KdTree, Backend::BruteForce] {
            let config = GraphConfig {
                k: 10,
                backend,
                normalize_rows: false,
            };
            group.bench_with_input(
                BenchmarkId::new(format!("{backend:?}"), n),
                &points,
                |b, p| b.iter(|| knn_graph(black_box(p), &config).unwrap()),
            );
        }
    }
    group.finish();
}

fn bench_propagate(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagate");
    for n in [1_000, 10_000] {
        let graph = knn_graph(&random_points(n, 10, 5), &GraphConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let labels = LabelVector::new(
            (0..n)
                .map(|_| match rng.gen_range(0..10) {
                    0 => 1,
                    1 => -1,
                    _ => 0,
                })
                .collect(),
        )
        .unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(n),
            &(&graph, &labels),
            |b, (g, l)| b.iter(|| propagate(black_box(g), l, &FabpConfig::default()).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_mttkrp,
    bench_cp_als,
    bench_knn,
    bench_propagate
);
criterion_main!(benches);
