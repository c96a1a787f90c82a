use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use sqrtdiff::bounds::{assemble, BoundContext};
use sqrtdiff::cir::{cir_exact_samples, cir_params, ncx2_pdf};
use sqrtdiff::density::{fourier_local, kde, KernelVariant, XiCutoff, XI_STEP};
use sqrtdiff::mc::{simulate_paths_with, Recording, Scheme};
use sqrtdiff::{CoefficientSet, NormTable};

fn oracle(c: &mut Criterion) {
    c.bench_function("ncx2_pdf/series", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for i in 1..=64 {
                s += ncx2_pdf(black_box(0.25 * i as f64), 3.0, 7.5).unwrap();
            }
            s
        })
    });
}

fn simulation(c: &mut Criterion) {
    let coeffs = CoefficientSet::constant(1.0, 1.0, 1.0, 0.5).unwrap();
    c.bench_function("euler/10k_paths_256_steps", |b| {
        b.iter(|| {
            simulate_paths_with(
                &coeffs,
                1.0,
                1.0,
                256,
                10_000,
                Scheme::FullTruncationEuler,
                black_box(7),
                Recording::Terminal,
            )
            .unwrap()
        })
    });
}

fn estimators(c: &mut Criterion) {
    let p = cir_params(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let samples = cir_exact_samples(&p, 20_000, 3);
    let grid: Vec<f64> = (1..=200).map(|i| 0.03 * i as f64).collect();
    c.bench_function("kde/log_20k_x_200", |b| {
        b.iter(|| kde(black_box(&samples), &grid, None, KernelVariant::LogGaussian).unwrap())
    });
    let ball: Vec<f64> = (0..=100).map(|i| 0.5 + 0.01 * i as f64).collect();
    c.bench_function("fourier_local/20k", |b| {
        b.iter(|| {
            fourier_local(
                black_box(&samples),
                1.0,
                0.5,
                &ball,
                XiCutoff::Fixed(30.0),
                XI_STEP,
            )
            .unwrap()
        })
    });
}

fn bounds(c: &mut Criterion) {
    let ctx = BoundContext::new(1.0, 2, 3).unwrap();
    c.bench_function("bounds/assemble_m2_k3", |b| {
        b.iter_batched(
            || NormTable::uniform(1.0, 1.0, 7),
            |t| assemble(&t, black_box(&ctx)).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, oracle, simulation, estimators, bounds);
criterion_main!(benches);
