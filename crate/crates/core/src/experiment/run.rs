//! Cross-validation over the loss x pitch condition grid.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::{rasterize, Corpus, TechniqueClass, DETECTION_CLASSES};
use crate::detector::{
    build_model, decode_events, featurize_track, predict_track, segment_clips, train, Clip,
    DecodeConfig, ModelConfig, PitchSource, TrainConfig,
};
use crate::dsp::{DspConfig, FeatureTensor};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, score_segments, segment_activity, MetricsReport, SegmentScores};
use crate::nn::LossKind;
use crate::par;

use super::folds::FoldPlan;

/// One cell of the condition grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub loss: LossKind,
    pub pitch: PitchSource,
}

impl Condition {
    /// Table-style condition name: BCE, Focal, BCE-GT, BCE-EST, Focal-GT,
    /// Focal-EST.
    pub fn name(&self) -> String {
        let loss = match self.loss {
            LossKind::Bce => "BCE",
            LossKind::Focal => "Focal",
        };
        match self.pitch {
            PitchSource::None => loss.to_string(),
            PitchSource::GroundTruth => format!("{loss}-GT"),
            PitchSource::Estimated => format!("{loss}-EST"),
        }
    }
}

/// The six-condition grid.
pub fn full_grid() -> Vec<Condition> {
    let mut grid = Vec::new();
    for loss in [LossKind::Bce, LossKind::Focal] {
        for pitch in [
            PitchSource::None,
            PitchSource::GroundTruth,
            PitchSource::Estimated,
        ] {
            grid.push(Condition { loss, pitch });
        }
    }
    grid
}

/// Component configs shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunSettings {
    pub dsp: DspConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

/// Manifest of one (condition, fold) training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldRun {
    pub condition: String,
    pub fold: usize,
    pub seed: u64,
    pub train_singers: Vec<String>,
    pub validation_singers: Vec<String>,
    pub test_singers: Vec<String>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Metrics pooled over this fold's test tracks.
    pub metrics: MetricsReport,
    pub model: ModelConfig,
    pub dsp: DspConfig,
    pub train_config: TrainConfig,
    pub decode: DecodeConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub name: String,
    pub folds: Vec<FoldRun>,
    /// Mean over folds of the pooled-per-fold metrics (the results table).
    pub mean_macro_f: f64,
    pub mean_micro_f: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// Metrics from confusion counts pooled across all folds' test tracks.
    pub pooled: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub class_order: Vec<TechniqueClass>,
    pub conditions: Vec<ConditionResult>,
}

impl ExperimentResults {
    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Detection-set classes that actually occur in the corpus, in the fixed
/// detection order. Training and evaluation run over exactly these.
pub fn detection_classes_present(corpus: &Corpus) -> Vec<TechniqueClass> {
    DETECTION_CLASSES
        .iter()
        .copied()
        .filter(|&c| {
            corpus
                .tracks
                .iter()
                .any(|t| t.events.iter().any(|e| e.class == c))
        })
        .collect()
}

/// The fold-mean results table as CSV (condition x metric).
pub fn results_csv(results: &ExperimentResults) -> String {
    let mut out = String::from("condition,macro_f,micro_f,precision,recall\n");
    for c in &results.conditions {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4}\n",
            c.name, c.mean_macro_f, c.mean_micro_f, c.mean_precision, c.mean_recall
        ));
    }
    out
}

/// Class-wise F table as CSV (condition x class), from pooled counts.
pub fn classwise_csv(results: &ExperimentResults) -> String {
    let mut out = String::from("condition");
    for class in &results.class_order {
        out.push_str(&format!(",{class}"));
    }
    out.push('\n');
    for c in &results.conditions {
        out.push_str(&c.name);
        for m in &c.pooled.per_class {
            out.push_str(&format!(",{:.4}", m.f_measure));
        }
        out.push('\n');
    }
    out
}

fn tagged(condition: &str, fold: usize, e: Error) -> Error {
    Error::Invalid(format!("condition {condition}, fold {fold}: {e}"))
}

/// Run every (condition, fold) cell: featurize, train, predict full tracks
/// clip-wise, decode, and score. Per-fold manifests, `results.csv`,
/// `classwise.csv`, and `results.json` land in `out_dir` when given.
pub fn run_experiment(
    corpus: &Corpus,
    plan: &FoldPlan,
    conditions: &[Condition],
    settings: &RunSettings,
    out_dir: Option<&Path>,
) -> Result<ExperimentResults> {
    let class_order = detection_classes_present(corpus);
    if class_order.is_empty() {
        return Err(Error::Invalid(
            "corpus has no events from the detection classes".into(),
        ));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let clip_frames = (settings.train.clip_len_s / settings.dsp.hop_s).round() as usize + 1;

    let mut condition_results = Vec::new();
    for condition in conditions {
        let name = condition.name();
        // Featurize every track once for this condition, in parallel.
        let features: HashMap<String, FeatureTensor> = {
            let results = par::map_slice(&corpus.tracks, |track| {
                featurize_track(track, &settings.dsp, condition.pitch)
                    .map(|f| (track.track_id.clone(), f))
            });
            let mut map = HashMap::new();
            for r in results {
                let (id, f) = r.map_err(|e| tagged(&name, 0, e))?;
                map.insert(id, f);
            }
            map
        };

        let clips_for = |singers: &[String], fold: usize| -> Result<Vec<Clip>> {
            let mut clips = Vec::new();
            for track in corpus
                .tracks
                .iter()
                .filter(|t| singers.contains(&t.singer_id))
            {
                let feats = &features[&track.track_id];
                let targets = rasterize(&track.events, feats.frames, settings.dsp.hop_s, &class_order);
                let mut cs =
                    segment_clips(track, feats, &targets, settings.train.clip_len_s)
                        .map_err(|e| tagged(&name, fold, e))?;
                clips.append(&mut cs);
            }
            Ok(clips)
        };

        let mut folds = Vec::new();
        let mut pooled = SegmentScores::zeros(class_order.clone(), 0.05);
        for fold in &plan.folds {
            let fold_seed = settings
                .train
                .seed
                .wrapping_add((fold.index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let train_clips = clips_for(&fold.train, fold.index)?;
            let val_clips = clips_for(&fold.validation, fold.index)?;

            let mut model_config = settings.model.clone();
            model_config.input_channels = condition.pitch.channels();
            model_config.n_mels = settings.dsp.n_mels;
            model_config.class_order = class_order.clone();
            let mut train_config = settings.train.clone();
            train_config.seed = fold_seed;
            train_config.loss.kind = condition.loss;

            let params = build_model(&model_config, fold_seed)
                .map_err(|e| tagged(&name, fold.index, e))?;
            let outcome = train(params, &train_clips, &val_clips, &train_config)
                .map_err(|e| tagged(&name, fold.index, e))?;

            let mut fold_scores = SegmentScores::zeros(class_order.clone(), 0.05);
            for track in corpus
                .tracks
                .iter()
                .filter(|t| fold.test.contains(&t.singer_id))
            {
                let feats = &features[&track.track_id];
                let probs = predict_track(
                    &outcome.params,
                    &outcome.norm,
                    feats,
                    settings.dsp.hop_s,
                    clip_frames,
                )
                .map_err(|e| tagged(&name, fold.index, e))?;
                let predicted = decode_events(&probs, &settings.decode)
                    .map_err(|e| tagged(&name, fold.index, e))?;
                let reference =
                    segment_activity(&track.events, track.duration_s, 0.05, &class_order);
                let pred_activity =
                    segment_activity(&predicted, track.duration_s, 0.05, &class_order);
                let scores = score_segments(&reference, &pred_activity)
                    .map_err(|e| tagged(&name, fold.index, e))?;
                fold_scores.merge(&scores).map_err(|e| tagged(&name, fold.index, e))?;
            }
            pooled.merge(&fold_scores).map_err(|e| tagged(&name, fold.index, e))?;

            let run = FoldRun {
                condition: name.clone(),
                fold: fold.index,
                seed: fold_seed,
                train_singers: fold.train.clone(),
                validation_singers: fold.validation.clone(),
                test_singers: fold.test.clone(),
                epochs_run: outcome.history.epochs.len(),
                best_epoch: outcome.history.best_epoch,
                best_val_loss: outcome.history.best_val_loss,
                metrics: aggregate(&fold_scores),
                model: model_config,
                dsp: settings.dsp.clone(),
                train_config,
                decode: settings.decode,
            };
            if let Some(dir) = out_dir {
                let path = dir.join(format!("fold_{}_{}.json", name, fold.index));
                let json = serde_json::to_string_pretty(&run)?;
                std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            }
            folds.push(run);
        }

        let k = folds.len() as f64;
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| {
            folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / k
        };
        condition_results.push(ConditionResult {
            condition: *condition,
            name: name.clone(),
            mean_macro_f: mean(&|m| m.macro_f),
            mean_micro_f: mean(&|m| m.micro_f),
            mean_precision: mean(&|m| m.micro_precision),
            mean_recall: mean(&|m| m.micro_recall),
            pooled: aggregate(&pooled),
            folds,
        });
    }

    let results = ExperimentResults {
        class_order,
        conditions: condition_results,
    };
    if let Some(dir) = out_dir {
        let write = |nm: &str, text: String| -> Result<()> {
            let p = dir.join(nm);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("results.csv", results_csv(&results))?;
        write("classwise.csv", classwise_csv(&results))?;
        write("results.json", serde_json::to_string_pretty(&results)?)?;
    }
    Ok(results)
}
