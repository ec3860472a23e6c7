use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::Rng;

use qdc::bench::{cv_select, CvSpec};
use qdc::classifiers::{fit, ClassifierKind, FitContext, ModelSpec, PipelineSpec};
use qdc::data::{rng_from_seed, Dataset};
use qdc::par::ExecMode;

fn synthetic(n: usize, q: usize, k: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let x = DMatrix::from_fn(n, q, |i, j| {
        let bump = if j % k == labels[i] { 1.5 } else { 0.0 };
        bump + rng.random_range(0.0..1.0)
    });
    Dataset::from_zero_based(x, &labels, k).unwrap()
}

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn batch_scoring(c: &mut Criterion) {
    let data = synthetic(4096, 64, 10, 1);
    let train = data.subset(&(0..512).collect::<Vec<_>>());
    let mut group = c.benchmark_group("batch_scoring");
    for kind in [ClassifierKind::PgmC, ClassifierKind::KPgmC] {
        let model = fit(&ModelSpec::new(kind, PipelineSpec::default()), &train, &FitContext::default()).unwrap();
        for mode in MODES {
            group.bench_with_input(BenchmarkId::new(kind.name(), format!("{mode:?}")), &mode, |b, &mode| {
                b.iter(|| black_box(model.scores_batch(data.features(), mode).unwrap()))
            });
        }
    }
    group.finish();
}

fn cross_validation(c: &mut Criterion) {
    let data = synthetic(400, 32, 5, 2);
    let spec = ModelSpec::new(ClassifierKind::KPgmC, PipelineSpec::default());
    let cv = CvSpec::default_for(ClassifierKind::KPgmC).unwrap();
    let mut group = c.benchmark_group("kpgm_threshold_cv");
    group.sample_size(10);
    for mode in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| black_box(cv_select(&spec, &data, &cv, 7, mode, None).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, batch_scoring, cross_validation);
criterion_main!(benches);
