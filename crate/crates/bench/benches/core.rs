use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use emap_bench::circle;
use emap_core::explain::{lime_explain, KernelSpec, DEFAULT_RIDGE};
use emap_core::geometry::Seed;
use emap_core::gh::{discrete_gh, GhMode};
use emap_core::models::LinearModel;
use emap_core::perturb::{emap_sample, EmapParams};
use emap_core::tda::{bottleneck_distance, rips_persistence, FiltrationParams};
use nalgebra::DMatrix;

fn tda(c: &mut Criterion) {
    let params = FiltrationParams::default();
    for n in [100, 300] {
        let cloud = circle(n, 1);
        c.bench_function(&format!("rips_h1_circle_{n}"), |b| {
            b.iter(|| rips_persistence(black_box(&cloud), &params).unwrap())
        });
    }
    let a = rips_persistence(&circle(200, 1), &params).unwrap();
    let b = rips_persistence(&circle(200, 2), &params).unwrap();
    c.bench_function("bottleneck_h0_200", |bn| {
        bn.iter(|| bottleneck_distance(black_box(&a[0]), black_box(&b[0])).unwrap())
    });
}

fn gh(c: &mut Criterion) {
    let x = circle(7, 3);
    let y = circle(7, 4);
    c.bench_function("gh_brute_force_7", |b| {
        b.iter(|| discrete_gh(black_box(&x), black_box(&y), GhMode::BruteForce).unwrap())
    });
}

fn explain(c: &mut Criterion) {
    let n = circle(200, 5).len();
    let train = circle(200, 5).with_labels((0..n).map(|i| i % 2).collect()).unwrap();
    let x0 = train.point(0).to_vec();
    let params = EmapParams {
        pivots_per_label: 1,
        per_pivot: 334,
        low_dim: 1,
        radius: 0.05,
        k_t: None,
        r_t: None,
    };
    c.bench_function("emap_sample_1002", |b| {
        b.iter(|| emap_sample(black_box(&train), &x0, &params, None, Seed::new(1, 0)).unwrap())
    });
    let perts = emap_sample(&train, &x0, &params, None, Seed::new(1, 0)).unwrap();
    let model = LinearModel::new(DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]), vec![0.0]).unwrap();
    c.bench_function("lime_explain_1002", |b| {
        b.iter(|| {
            lime_explain(
                &model,
                &x0,
                black_box(&perts),
                &KernelSpec::exponential_lowdim(None),
                DEFAULT_RIDGE,
                Some(0),
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, tda, gh, explain);
criterion_main!(benches);
