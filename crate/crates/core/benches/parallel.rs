//! Parallel vs sequential throughput of the data-parallel stages.
//!
//! The same code paths run inside rayon pools of 1 and N threads, which
//! isolates the parallelization gain without rebuilding the crate. Building
//! with `--no-default-features` turns every path into the plain sequential
//! fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use singtech::annotation::{rasterize, TechniqueClass, TechniqueEvent};
use singtech::detector::{
    build_model, predict_track, segment_clips, train, Clip, ModelConfig, Normalization,
    TrainConfig,
};
use singtech::dsp::{mel_spectrogram, DspConfig, FeatureTensor};
use singtech::nn::LossConfig;
use singtech::par;
use singtech::rng::SplitMix64;

fn sine(freq: f64, seconds: f64) -> Vec<f32> {
    let n = (seconds * 44100.0) as usize;
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 44100.0).sin() as f32)
        .collect()
}

/// Featurize a batch of tracks, the dominant data-parallel inner loop.
fn bench_featurize(c: &mut Criterion) {
    let config = DspConfig::default();
    let tracks: Vec<Vec<f32>> = (0..8)
        .map(|i| sine(220.0 + 55.0 * i as f64, 2.0))
        .collect();
    let mut group = c.benchmark_group("featurize_batch");
    group.sample_size(10);
    for threads in [1usize, 0] {
        let label = if threads == 1 { "1-thread" } else { "all-threads" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &threads, |b, &n| {
            #[cfg(feature = "parallel")]
            {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .unwrap();
                b.iter(|| {
                    pool.install(|| {
                        par::map_slice(&tracks, |t| {
                            mel_spectrogram(t, 44100, &config).unwrap().values[0]
                        })
                    })
                });
            }
            #[cfg(not(feature = "parallel"))]
            {
                let _ = n;
                b.iter(|| {
                    par::map_slice(&tracks, |t| {
                        mel_spectrogram(t, 44100, &config).unwrap().values[0]
                    })
                });
            }
        });
    }
    group.finish();
}

fn tiny_clips(n: usize) -> (ModelConfig, Vec<Clip>) {
    let config = ModelConfig {
        input_channels: 1,
        n_mels: 16,
        gru_hidden: 8,
        class_order: vec![TechniqueClass::Vibrato, TechniqueClass::Drop],
        ..ModelConfig::default()
    };
    let mut rng = SplitMix64::new(5);
    let clips: Vec<Clip> = (0..n)
        .map(|i| {
            let frames = 200;
            let features = FeatureTensor {
                channels: 1,
                n_mels: 16,
                frames,
                values: (0..16 * frames)
                    .map(|_| rng.range_f64(-1.0, 1.0) as f32)
                    .collect(),
            };
            let events = vec![TechniqueEvent::new(TechniqueClass::Vibrato, 0.2, 0.8)];
            let targets = rasterize(&events, frames, 0.01, &config.class_order);
            Clip {
                track_id: format!("t{i}"),
                start_s: 0.0,
                features,
                targets,
                valid_frames: frames,
            }
        })
        .collect();
    (config, clips)
}

/// One training epoch: per-clip gradients fan out across the batch.
fn bench_train_epoch(c: &mut Criterion) {
    let (config, clips) = tiny_clips(8);
    let tc = TrainConfig {
        batch_size: 8,
        lr: 1e-3,
        patience: 1,
        max_epochs: 1,
        loss: LossConfig::default(),
        clip_len_s: 2.0,
        seed: 3,
    };
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for threads in [1usize, 0] {
        let label = if threads == 1 { "1-thread" } else { "all-threads" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &threads, |b, &n| {
            #[cfg(feature = "parallel")]
            {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .unwrap();
                b.iter(|| {
                    pool.install(|| {
                        let params = build_model(&config, 1).unwrap();
                        train(params, &clips, &clips[..2], &tc).unwrap().history
                    })
                });
            }
            #[cfg(not(feature = "parallel"))]
            {
                let _ = n;
                b.iter(|| {
                    let params = build_model(&config, 1).unwrap();
                    train(params, &clips, &clips[..2], &tc).unwrap().history
                });
            }
        });
    }
    group.finish();
}

/// Clip-wise inference over a long track.
fn bench_predict(c: &mut Criterion) {
    let (config, _) = tiny_clips(1);
    let params = build_model(&config, 2).unwrap();
    let norm = Normalization::identity(16);
    let mut rng = SplitMix64::new(9);
    let frames = 3001;
    let features = FeatureTensor {
        channels: 1,
        n_mels: 16,
        frames,
        values: (0..16 * frames)
            .map(|_| rng.range_f64(-1.0, 1.0) as f32)
            .collect(),
    };
    let mut group = c.benchmark_group("predict_track");
    group.sample_size(10);
    for threads in [1usize, 0] {
        let label = if threads == 1 { "1-thread" } else { "all-threads" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &threads, |b, &n| {
            #[cfg(feature = "parallel")]
            {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .unwrap();
                b.iter(|| {
                    pool.install(|| predict_track(&params, &norm, &features, 0.01, 201).unwrap())
                });
            }
            #[cfg(not(feature = "parallel"))]
            {
                let _ = n;
                b.iter(|| predict_track(&params, &norm, &features, 0.01, 201).unwrap());
            }
        });
    }
    group.finish();
}

/// Keep the clip segmentation itself honest: it is sequential either way.
fn bench_segment(c: &mut Criterion) {
    let (config, clips) = tiny_clips(1);
    let clip = &clips[0];
    let track = singtech::annotation::TrackAnnotation {
        track_id: "t".into(),
        singer_id: "s".into(),
        duration_s: 2.0,
        year: None,
        events: vec![],
        pitch: singtech::annotation::PitchContour::default(),
        pitch_estimated: None,
        audio_path: None,
    };
    let targets = rasterize(&[], clip.features.frames, 0.01, &config.class_order);
    c.bench_function("segment_clips", |b| {
        b.iter(|| segment_clips(&track, &clip.features, &targets, 0.5).unwrap().len())
    });
}

criterion_group!(
    benches,
    bench_featurize,
    bench_train_epoch,
    bench_predict,
    bench_segment
);
criterion_main!(benches);
