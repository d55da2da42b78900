use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use segnoise_bench::{disc, phantom_patients, soft_prediction};
use segnoise_core::metrics::{f_beta, grad_loss};
use segnoise_core::morphology::{dilate, erode};
use segnoise_core::trainer::{objective_and_gradient, LinearSegmenter, TrainingFrame};
use segnoise_core::Beta;

fn morphology(c: &mut Criterion) {
    let frame = disc(240);
    let mut group = c.benchmark_group("morphology_240");
    for k in [1, 3, 8] {
        group.bench_with_input(BenchmarkId::new("dilate", k), &k, |b, &k| b.iter(|| dilate(black_box(&frame), k)));
        group.bench_with_input(BenchmarkId::new("erode", k), &k, |b, &k| b.iter(|| erode(black_box(&frame), k)));
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let t = disc(240);
    let p = soft_prediction(240);
    let beta = Beta::new(0.6).unwrap();
    c.bench_function("f_beta_240", |b| b.iter(|| f_beta(black_box(&p), &t, beta)));
    c.bench_function("grad_loss_240", |b| b.iter(|| grad_loss(black_box(&p), &t, beta)));
}

fn trainer(c: &mut Criterion) {
    let patients = phantom_patients(4);
    let frames: Vec<TrainingFrame> = patients
        .iter()
        .flat_map(|p| {
            p.frames.iter().enumerate().map(move |(z, f)| TrainingFrame {
                features: f,
                target: p.mask.frame_slice(z),
            })
        })
        .collect();
    let model = LinearSegmenter::zeros(frames[0].features.arity());
    c.bench_function("trainer_epoch_32_frames", |b| {
        b.iter(|| objective_and_gradient(black_box(&model), &frames, Beta::ONE))
    });
}

criterion_group!(benches, morphology, metrics, trainer);
criterion_main!(benches);
