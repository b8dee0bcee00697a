use binloc_bench::{batch, clip, SAMPLE_RATE_HZ};
use binloc_core::features::{assemble_features, stft, Channel};
use binloc_core::nn::{model_backward, model_forward, ModelState, Mode};
use binloc_core::synth::{generate_source, render_binaural, HeadModel, SourceKind, SourceSpec};
use binloc_core::training::{circular_mse_loss, AdamState};
use binloc_core::FeatureSetSpec;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn synthesis(c: &mut Criterion) {
    let source = generate_source(&SourceSpec::new(SourceKind::PinkNoise, 1), SAMPLE_RATE_HZ).unwrap();
    let head = HeadModel::default();
    c.bench_function("render_binaural_1s", |b| b.iter(|| render_binaural(black_box(&source), 45.0, &head, None).unwrap()));
    c.bench_function("render_binaural_1s_reverb", |b| {
        b.iter(|| render_binaural(black_box(&source), 45.0, &head, Some(3)).unwrap())
    });
}

fn features(c: &mut Criterion) {
    let clip = clip(1).unwrap();
    c.bench_function("stft_1s", |b| b.iter(|| stft(black_box(clip.left()), Channel::Left).unwrap()));
    for spec in ["ild+ipd", "mag_lr+phase_lr+ild+ipd"] {
        let s: FeatureSetSpec = spec.parse().unwrap();
        c.bench_function(&format!("assemble_{spec}"), |b| b.iter(|| assemble_features(black_box(&clip), &s).unwrap()));
    }
}

fn network(c: &mut Criterion) {
    let mut group = c.benchmark_group("cnn_batch32");
    group.sample_size(10);
    for channels in [2, 6] {
        let params = ModelState::<f32>::init(channels, 7).unwrap();
        let x = batch(32, channels).unwrap();
        let labels = vec![0.3; 32];
        group.bench_function(format!("infer_c{channels}"), |b| {
            b.iter(|| model_forward(&params, black_box(&x), Mode::Infer).unwrap())
        });
        group.bench_function(format!("train_step_c{channels}"), |b| {
            let mut p = params.clone();
            let mut adam = AdamState::new(&p);
            b.iter(|| {
                let (pred, trace) = model_forward(&p, black_box(&x), Mode::Train { dropout_seed: 1 }).unwrap();
                let pred64: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
                let (_, g) = circular_mse_loss(&labels, &pred64).unwrap();
                let g32: Vec<f32> = g.iter().map(|&v| v as f32).collect();
                let grads = model_backward(&p, trace.as_ref(), &g32).unwrap();
                adam.step(&mut p, &grads, 1e-3).unwrap();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, synthesis, features, network);
criterion_main!(benches);
