//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use singtech::annotation::{load_corpus, parse_events, serialize_events, Corpus};
use singtech::detector::{
    build_model, decode_events, featurize_track, predict_track, track_clips, train as train_model,
    DecodeConfig, ModelConfig, PitchSource, TrainConfig,
};
use singtech::dsp::DspConfig;
use singtech::evaluation::{
    aggregate, classwise_report, metrics_csv, score_segments, segment_activity, SegmentScores,
};
use singtech::experiment::{
    detection_classes_present, full_grid, make_folds, run_experiment, synth_corpus, Condition,
    RunSettings, SynthSpec,
};
use singtech::io::{feature_cache, weights};
use singtech::nn::Tensor;
use singtech::stats::{corpus_stats, render_report, ReportFormat};

fn write_or_print(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- stats --

#[derive(Args)]
pub struct StatsArgs {
    /// Corpus manifest (JSON).
    manifest: PathBuf,
    /// Output format: text, json, or csv.
    #[arg(long, default_value = "text")]
    format: String,
    /// Shorthand for --format json.
    #[arg(long)]
    json: bool,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn stats(args: StatsArgs) -> Result<()> {
    let corpus = load_corpus(&args.manifest)?;
    let report = corpus_stats(&corpus)?;
    let format: ReportFormat = if args.json {
        ReportFormat::Json
    } else {
        args.format.parse()?
    };
    let rendered = render_report(&report, format)?;
    write_or_print(args.out.as_deref(), &rendered)
}

// ------------------------------------------------------------ featurize --

#[derive(Args)]
pub struct FeaturizeArgs {
    /// Corpus manifest (JSON).
    manifest: PathBuf,
    /// Directory for the per-track feature caches.
    #[arg(long)]
    out: PathBuf,
    /// Pitch channel source: none, gt, or est.
    #[arg(long, default_value = "none")]
    pitch: String,
    /// DSP overrides (JSON file with DspConfig fields).
    #[arg(long)]
    dsp: Option<PathBuf>,
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn featurize(args: FeaturizeArgs) -> Result<()> {
    let corpus = load_corpus(&args.manifest)?;
    let pitch: PitchSource = args.pitch.parse()?;
    let dsp: DspConfig = match &args.dsp {
        Some(p) => load_json(p)?,
        None => DspConfig::default(),
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let results = singtech::par::map_slice(&corpus.tracks, |track| {
        featurize_track(track, &dsp, pitch).map(|f| (track.track_id.clone(), f))
    });
    for r in results {
        let (id, features) = r?;
        let path = args.out.join(format!("{id}.stfe"));
        feature_cache::write_features(&path, &dsp, &features)?;
        println!(
            "{id}: {} x {} x {} -> {}",
            features.channels,
            features.n_mels,
            features.frames,
            path.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- synth --

#[derive(Args)]
pub struct SynthArgs {
    /// Synthesis spec (JSON with SynthSpec fields); omit for defaults.
    spec: Option<PathBuf>,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec seed.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.spec {
        Some(p) => load_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let corpus = synth_corpus(&spec, &args.out)?;
    let events: usize = corpus.tracks.iter().map(|t| t.events.len()).sum();
    println!(
        "wrote {} tracks ({} singers, {} events) to {}",
        corpus.tracks.len(),
        corpus.singers().len(),
        events,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- split --

#[derive(Args)]
pub struct SplitArgs {
    /// Corpus manifest (JSON).
    manifest: PathBuf,
    /// Number of folds.
    #[arg(short, default_value_t = 7)]
    k: usize,
    /// Balancing tie-break seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the fold plan JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn split(args: SplitArgs) -> Result<()> {
    let corpus = load_corpus(&args.manifest)?;
    let plan = make_folds(&corpus, args.k, args.seed)?;
    let json = serde_json::to_string_pretty(&plan)? + "\n";
    write_or_print(args.out.as_deref(), &json)
}

// ---------------------------------------------------------------- train --

/// Train run description (JSON file).
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub manifest: PathBuf,
    pub train_singers: Vec<String>,
    pub validation_singers: Vec<String>,
    #[serde(default = "default_pitch")]
    pub pitch: PitchSource,
    #[serde(default)]
    pub dsp: DspConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub out_weights: PathBuf,
    #[serde(default)]
    pub out_manifest: Option<PathBuf>,
}

fn default_pitch() -> PitchSource {
    PitchSource::None
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run config (JSON, see TrainRunConfig).
    config: PathBuf,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config: &'a TrainRunConfig,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    parameters: usize,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let run: TrainRunConfig = load_json(&args.config)?;
    let config_dir = args.config.parent().unwrap_or(Path::new(""));
    let manifest = if run.manifest.is_relative() {
        config_dir.join(&run.manifest)
    } else {
        run.manifest.clone()
    };
    let corpus = load_corpus(&manifest)?;
    let classes = detection_classes_present(&corpus);
    if classes.is_empty() {
        bail!("corpus has no detection-class events");
    }

    let mut model_config = run.model.clone();
    model_config.input_channels = run.pitch.channels();
    model_config.n_mels = run.dsp.n_mels;
    model_config.class_order = classes.clone();

    let collect = |singers: &[String]| -> Result<Vec<_>> {
        let mut clips = Vec::new();
        for track in corpus.tracks.iter().filter(|t| singers.contains(&t.singer_id)) {
            clips.extend(track_clips(
                track,
                &run.dsp,
                run.pitch,
                &classes,
                run.train.clip_len_s,
            )?);
        }
        Ok(clips)
    };
    let train_clips = collect(&run.train_singers)?;
    let val_clips = collect(&run.validation_singers)?;
    if train_clips.is_empty() || val_clips.is_empty() {
        bail!("training or validation singer set matches no tracks");
    }

    let params = build_model(&model_config, run.train.seed)?;
    let n_params = params.num_parameters();
    let outcome = train_model(params, &train_clips, &val_clips, &run.train)?;

    let header = weights::WeightsHeader {
        model: model_config,
        dsp: run.dsp.clone(),
        pitch_source: run.pitch,
        loss: run.train.loss,
        seed: run.train.seed,
    };
    let mean = Tensor::from_vec(vec![outcome.norm.mean.len()], outcome.norm.mean.clone());
    let std = Tensor::from_vec(vec![outcome.norm.std.len()], outcome.norm.std.clone());
    let mut named: Vec<(String, &Tensor<f32>)> = outcome.params.named_tensors();
    named.push(("norm.mean".into(), &mean));
    named.push(("norm.std".into(), &std));
    weights::save_model(&run.out_weights, &header, &named)?;

    let manifest = RunManifest {
        config: &run,
        epochs_run: outcome.history.epochs.len(),
        best_epoch: outcome.history.best_epoch,
        best_val_loss: outcome.history.best_val_loss,
        parameters: n_params,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)? + "\n";
    match &run.out_manifest {
        Some(p) => std::fs::write(p, &manifest_json)
            .with_context(|| format!("writing {}", p.display()))?,
        None => print!("{manifest_json}"),
    }
    println!(
        "trained {} epochs (best {} at val loss {:.6}) -> {}",
        outcome.history.epochs.len(),
        outcome.history.best_epoch,
        outcome.history.best_val_loss,
        run.out_weights.display()
    );
    Ok(())
}

// -------------------------------------------------------------- predict --

#[derive(Args)]
pub struct PredictArgs {
    /// Trained weights file.
    weights: PathBuf,
    /// Corpus manifest with audio to predict on.
    manifest: PathBuf,
    /// Directory for per-track event CSVs.
    #[arg(long)]
    out: PathBuf,
    /// Binarization threshold.
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    /// Odd median filter width in frames (0 = off).
    #[arg(long, default_value_t = 0)]
    median: usize,
    /// Drop events shorter than this many seconds.
    #[arg(long, default_value_t = 0.05)]
    min_duration: f64,
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let saved = weights::load_model(&args.weights)?;
    let params =
        singtech::detector::CrnnParams::from_tensor_map(&saved.header.model, |name| {
            saved.tensors.get(name).cloned()
        })?;
    let norm = saved.normalization()?;
    let corpus = load_corpus(&args.manifest)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let decode = DecodeConfig {
        threshold: args.threshold,
        median_width_frames: args.median,
        min_duration_s: args.min_duration,
    };
    let clip_frames = (10.0 / saved.header.dsp.hop_s).round() as usize + 1;
    for track in &corpus.tracks {
        let features = featurize_track(track, &saved.header.dsp, saved.header.pitch_source)?;
        let probs = predict_track(
            &params,
            &norm,
            &features,
            saved.header.dsp.hop_s,
            clip_frames,
        )?;
        let events = decode_events(&probs, &decode)?;
        let path = args.out.join(format!("{}.csv", track.track_id));
        std::fs::write(&path, serialize_events(&events))
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{}: {} events", track.track_id, events.len());
    }
    Ok(())
}

// ----------------------------------------------------------------- eval --

#[derive(Args)]
pub struct EvalArgs {
    /// Reference corpus manifest.
    ref_manifest: PathBuf,
    /// Directory of predicted event CSVs (one <track_id>.csv per track).
    pred_dir: PathBuf,
    /// Emit JSON instead of a text table.
    #[arg(long)]
    json: bool,
    /// Emit CSV instead of a text table.
    #[arg(long)]
    csv: bool,
    /// Segment length in seconds.
    #[arg(long, default_value_t = 0.05)]
    segment: f64,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let corpus = load_corpus(&args.ref_manifest)?;
    let classes = detection_classes_present(&corpus);
    if classes.is_empty() {
        bail!("reference corpus has no detection-class events");
    }
    let mut pooled = SegmentScores::zeros(classes.clone(), args.segment);
    for track in &corpus.tracks {
        let pred_path = args.pred_dir.join(format!("{}.csv", track.track_id));
        let text = std::fs::read_to_string(&pred_path)
            .with_context(|| format!("reading {}", pred_path.display()))?;
        let predicted = parse_events(&text)?;
        let reference =
            segment_activity(&track.events, track.duration_s, args.segment, &classes);
        let pred_activity =
            segment_activity(&predicted, track.duration_s, args.segment, &classes);
        pooled.merge(&score_segments(&reference, &pred_activity)?)?;
    }
    let report = aggregate(&pooled);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else if args.csv {
        print!("{}", metrics_csv(&report));
    } else {
        print!("{}", classwise_report(&pooled));
    }
    Ok(())
}

// ----------------------------------------------------------- experiment --

/// Experiment description (JSON file).
#[derive(Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Conditions to run; omit for the full six-condition grid.
    #[serde(default)]
    pub conditions: Option<Vec<Condition>>,
    #[serde(default)]
    pub dsp: DspConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub decode: DecodeConfig,
}

fn default_k() -> usize {
    7
}

#[derive(Args)]
pub struct ExperimentArgs {
    /// Experiment config (JSON, see ExperimentConfig).
    config: PathBuf,
}

pub fn experiment(args: ExperimentArgs) -> Result<()> {
    let config: ExperimentConfig = load_json(&args.config)?;
    let config_dir = args.config.parent().unwrap_or(Path::new(""));
    let corpus_path = if config.corpus.is_relative() {
        config_dir.join(&config.corpus)
    } else {
        config.corpus.clone()
    };
    let corpus = load_corpus(&corpus_path)?;
    let plan = make_folds(&corpus, config.k, config.seed)?;
    let conditions = config.conditions.clone().unwrap_or_else(full_grid);
    let settings = RunSettings {
        dsp: config.dsp.clone(),
        model: config.model.clone(),
        train: config.train.clone(),
        decode: config.decode,
    };
    let results = run_experiment(&corpus, &plan, &conditions, &settings, Some(&config.out_dir))?;
    print!("{}", singtech::experiment::results_csv(&results));
    println!("full results in {}", config.out_dir.display());
    Ok(())
}

// --------------------------------------------------------------- corpus --

#[allow(dead_code)]
fn corpus_summary(corpus: &Corpus) -> String {
    format!(
        "{} tracks, {} singers",
        corpus.tracks.len(),
        corpus.singers().len()
    )
}
