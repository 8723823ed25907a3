//! Deterministic minibatch training with Adam and validation-loss early
//! stopping.
//!
//! Per-clip gradients inside a batch are computed independently (in
//! parallel when the `parallel` feature is on) and summed in clip order, so
//! the updates are bit-identical regardless of thread count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, LossConfig, Tensor};
use crate::par;
use crate::rng::SplitMix64;

use super::clip::{Clip, Normalization};
use super::model::{backward, forward, CrnnGrads, CrnnParams};

/// Training hyperparameters. Defaults follow the detection setup: batches
/// of 16 ten-second clips, Adam at 1e-4, early stop after 10 epochs without
/// validation improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub loss: LossConfig,
    pub clip_len_s: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            lr: 1e-4,
            patience: 10,
            max_epochs: 200,
            loss: LossConfig::default(),
            clip_len_s: 10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size, patience, and max_epochs must be positive".into(),
            ));
        }
        if self.clip_len_s <= 0.0 {
            return Err(Error::Config(format!("clip_len_s {}", self.clip_len_s)));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Trained parameters plus the fitted feature normalization and the
/// per-epoch loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: CrnnParams<f32>,
    pub norm: Normalization,
    pub history: TrainHistory,
}

/// A clip trimmed to its valid frames with loss tensors prebuilt.
struct Prepared {
    features: Tensor<f32>,
    /// `[valid x classes]`, matching the model output layout.
    targets: Tensor<f32>,
    mask: Tensor<f32>,
}

fn prepare(clip: &Clip, norm: &Normalization) -> Prepared {
    let valid = clip.valid_frames;
    let mut features = clip.features.slice_frames(0, valid, valid);
    norm.apply(&mut features);
    let classes = clip.targets.num_classes();
    let mut targets = Tensor::zeros(vec![valid, classes]);
    for c in 0..classes {
        for t in 0..valid {
            targets.data_mut()[t * classes + c] = clip.targets.get(c, t);
        }
    }
    let mut mask = Tensor::zeros(vec![valid, classes]);
    mask.fill(1.0);
    Prepared {
        features: Tensor::from_vec(
            vec![features.channels, features.n_mels, valid],
            features.values,
        ),
        targets,
        mask,
    }
}

fn clip_loss_and_grads(
    params: &CrnnParams<f32>,
    item: &Prepared,
    loss: &LossConfig,
    with_grads: bool,
) -> Result<(f64, Option<CrnnGrads<f32>>)> {
    let cache = forward(params, &item.features)?;
    let (value, grad_probs) = loss.evaluate(&cache.probs, &item.targets, &item.mask)?;
    if !with_grads {
        return Ok((value as f64, None));
    }
    let (grads, _) = backward(params, &cache, &grad_probs)?;
    Ok((value as f64, Some(grads)))
}

/// Train a model on prepared clips, returning the parameters of the best
/// validation epoch.
pub fn train(
    params: CrnnParams<f32>,
    train_clips: &[Clip],
    val_clips: &[Clip],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_clips.is_empty() || val_clips.is_empty() {
        return Err(Error::Invalid(
            "training and validation splits must both be non-empty".into(),
        ));
    }
    let norm = Normalization::fit(train_clips)?;
    let train_set: Vec<Prepared> = train_clips.iter().map(|c| prepare(c, &norm)).collect();
    let val_set: Vec<Prepared> = val_clips.iter().map(|c| prepare(c, &norm)).collect();

    let mut params = params;
    let adam_config = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut adam = {
        let named = params.named_tensors();
        let refs: Vec<&Tensor<f32>> = named.iter().map(|(_, t)| *t).collect();
        Adam::new(adam_config, &refs)
    };

    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
    };
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut batches = 0usize;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let results = par::map_slice(batch, |&idx| {
                clip_loss_and_grads(&params, &train_set[idx], &config.loss, true)
            });
            let mut total = params.zero_grads();
            let mut batch_loss = 0.0f64;
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                total.add_assign(&grads.expect("gradients requested"));
            }
            let scale = 1.0 / batch.len() as f32;
            total.scale(scale);
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            epoch_loss += batch_loss;
            batches += 1;
            let grad_refs = total.tensors();
            let mut param_refs = params.tensors_mut();
            adam.step(&mut param_refs, &grad_refs)?;
        }
        let train_loss = epoch_loss / batches as f64;

        let val_losses = par::map_slice(&val_set, |item| {
            clip_loss_and_grads(&params, item, &config.loss, false).map(|(l, _)| l)
        });
        let mut val_loss = 0.0f64;
        for l in val_losses {
            val_loss += l?;
        }
        val_loss /= val_set.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, step: 0 });
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        norm,
        history,
    })
}
