use std::collections::HashSet;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use scifund_core::estimator::{self, CovType};
use scifund_core::synthgen::{self, DgpConfig};
use scifund_core::topics;

fn bench_estimators(c: &mut Criterion) {
    let cfg = DgpConfig {
        n_scholars: 500,
        n_years: 10, // n = 5,000
        control_count: 10,
        ..Default::default()
    };
    let g = synthgen::generate(&cfg).unwrap();
    let d = g.design;
    let regs = estimator::hstack(&estimator::col_matrix(&d.d), &d.x);
    let mut labels = vec!["d".to_string()];
    labels.extend(d.x_labels.iter().cloned());

    c.bench_function("ols_5000x11", |b| {
        b.iter(|| estimator::ols(&d.y, &regs, &labels, CovType::Hc1).unwrap())
    });

    c.bench_function("tsls_5000x11_l3", |b| {
        b.iter(|| {
            estimator::tsls(
                &d.y, &d.d, &d.z, &d.x, "d", &d.z_labels, &d.x_labels, CovType::Hc1,
            )
            .unwrap()
        })
    });

    c.bench_function("diagnostics_battery_5000", |b| {
        b.iter(|| scifund_core::diagnostics::run_battery(&d.y, &d.d, &d.z, &d.x).unwrap())
    });
}

fn bench_lda(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let docs: Vec<(String, String)> = (0..200)
        .map(|i| {
            let text: Vec<String> = (0..80).map(|_| format!("w{}", rng.gen_range(0..100))).collect();
            (format!("d{}", i), text.join(" "))
        })
        .collect();
    let corpus = topics::preprocess(&docs, &HashSet::new()).unwrap();
    let cfg = topics::LdaConfig {
        k: 10,
        alpha: None,
        eta: 0.01,
        iterations: 50,
        burn_in: 10,
        seed: 0,
    };
    c.bench_function("lda_200docs_50iters", |b| {
        b.iter_batched(
            || corpus.clone(),
            |corp| topics::fit_lda(&corp, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, bench_estimators, bench_lda);
criterion_main!(benches);
