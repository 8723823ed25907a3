use std::time::Instant;
use singtech::annotation::{rasterize, TechniqueClass, TechniqueEvent};
use singtech::detector::{build_model, train, Clip, ModelConfig, TrainConfig};
use singtech::dsp::FeatureTensor;
use singtech::nn::{LossConfig, LossKind};
use singtech::rng::SplitMix64;

fn main() {
    let config = ModelConfig::default();
    let mut rng = SplitMix64::new(1);
    let frames = 1001;
    let features = FeatureTensor {
        channels: 1, n_mels: 64, frames,
        values: (0..64 * frames).map(|_| rng.range_f64(-1.0, 1.0) as f32).collect(),
    };
    let events = vec![
        TechniqueEvent::new(TechniqueClass::Vibrato, 1.0, 2.0),
        TechniqueEvent::new(TechniqueClass::Drop, 4.0, 4.2),
    ];
    let targets = rasterize(&events, frames, 0.01, &ModelConfig::default().class_order);
    let clip = Clip { track_id: "t".into(), start_s: 0.0, features, targets, valid_frames: frames };
    let params = build_model(&config, 7).unwrap();
    let tc = TrainConfig {
        batch_size: 1, lr: 1e-4, patience: 1000, max_epochs: 10,
        loss: LossConfig { kind: LossKind::Bce, ..LossConfig::default() },
        clip_len_s: 10.0, seed: 0,
    };
    let t0 = Instant::now();
    let out = train(params, &[clip.clone()], &[clip], &tc).unwrap();
    let dt = t0.elapsed();
    println!("10 steps+val in {:.2?} -> per step+val {:.0} ms", dt, dt.as_millis() as f64 / 10.0);
    println!("loss {} -> {}", out.history.epochs[0].train_loss, out.history.epochs[9].train_loss);
}
