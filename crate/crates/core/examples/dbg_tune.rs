use std::time::Instant;
use singtech::detector::{ConvLayerConfig, DecodeConfig, ModelConfig, TrainConfig, PitchSource};
use singtech::dsp::DspConfig;
use singtech::experiment::*;
use singtech::nn::{LossConfig, LossKind};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let folds_to_run: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let max_epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2e-3);
    let ch: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(16);
    let gru: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(32);
    let rate: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(6.0);
    let threshold: f32 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0.4);
    let median: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(3);
    let loss_kind = match args.get(9).map(|s| s.as_str()).unwrap_or("focal") {
        "bce" => LossKind::Bce, _ => LossKind::Focal,
    };
    let pitch = match args.get(10).map(|s| s.as_str()).unwrap_or("gt") {
        "none" => PitchSource::None, "est" => PitchSource::Estimated, _ => PitchSource::GroundTruth,
    };

    let dir = std::path::PathBuf::from(format!("/tmp/synth_tune_r{rate}"));
    let spec = SynthSpec { events_per_class: rate, ..SynthSpec::default() };
    let t0 = Instant::now();
    let corpus = if dir.join("manifest.json").exists() {
        singtech::annotation::load_corpus(&dir.join("manifest.json")).unwrap()
    } else {
        synth_corpus(&spec, &dir).unwrap()
    };
    println!("corpus ready in {:.1?} ({} tracks)", t0.elapsed(), corpus.tracks.len());
    let plan = make_folds(&corpus, 7, 0).unwrap();

    let model = ModelConfig {
        conv_layers: [4, 2, 2].iter().map(|&p| ConvLayerConfig {
            out_channels: ch, kernel: (3, 3), freq_pool: p,
        }).collect(),
        gru_hidden: gru,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        batch_size: 16, lr, patience: 8, max_epochs,
        loss: LossConfig { kind: loss_kind, ..LossConfig::default() },
        clip_len_s: 10.0, seed: 0,
    };
    let settings = RunSettings {
        dsp: DspConfig::default(), model, train,
        decode: DecodeConfig { threshold, median_width_frames: median, min_duration_s: 0.05 },
    };
    let mut small_plan = plan.clone();
    small_plan.folds.truncate(folds_to_run);
    let cond = Condition { loss: loss_kind, pitch };
    let t1 = Instant::now();
    let results = run_experiment(&corpus, &small_plan, &[cond], &settings, None).unwrap();
    let dt = t1.elapsed();
    let c = &results.conditions[0];
    println!("== {} folds in {:.1?} ({:.1?}/fold) condition {}", folds_to_run, dt, dt / folds_to_run as u32, c.name);
    for f in &c.folds {
        println!("fold {}: epochs {} best {} val {:.5} macroF {:.3}", f.fold, f.epochs_run, f.best_epoch, f.best_val_loss, f.metrics.macro_f);
    }
    println!("pooled macroF {:.4} microF {:.4}", c.pooled.macro_f, c.pooled.micro_f);
    for m in &c.pooled.per_class {
        println!("  {:<10} P {:.3} R {:.3} F {:.3}", m.class.name(), m.precision, m.recall, m.f_measure);
    }
}
