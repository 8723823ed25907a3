//! CRNN assembly: three conv/ReLU/frequency-pool blocks, one bidirectional
//! GRU layer, and a fully connected sigmoid head producing per-frame,
//! per-class probabilities.

use serde::{Deserialize, Serialize};

use crate::annotation::{FrameRoll, TechniqueClass, DETECTION_CLASSES};
use crate::dsp::FeatureTensor;
use crate::error::{Error, Result};
use crate::nn::{
    bigru, bigru_backward, conv2d, conv2d_backward, freq_max_pool, freq_max_pool_backward,
    linear_sigmoid, linear_sigmoid_backward, relu, relu_backward, BiGruParams, Conv2dParams,
    GruCache, LinearParams, Scalar, Tensor,
};
use crate::rng::SplitMix64;

use super::clip::Normalization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerConfig {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub freq_pool: usize,
}

/// Architecture description. The defaults follow the usual CRNN baseline:
/// 3 conv layers of 32 filters (3x3, ReLU) with frequency pooling 4/2/2,
/// a bidirectional GRU of 64 units per direction, and one FC layer over the
/// nine detection classes. The time axis is never pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub n_mels: usize,
    pub conv_layers: Vec<ConvLayerConfig>,
    pub gru_hidden: usize,
    pub class_order: Vec<TechniqueClass>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 1,
            n_mels: 64,
            conv_layers: [4, 2, 2]
                .iter()
                .map(|&pool| ConvLayerConfig {
                    out_channels: 32,
                    kernel: (3, 3),
                    freq_pool: pool,
                })
                .collect(),
            gru_hidden: 64,
            class_order: DETECTION_CLASSES.to_vec(),
        }
    }
}

impl ModelConfig {
    pub fn n_classes(&self) -> usize {
        self.class_order.len()
    }

    /// Frequency extent left after all pooling stages.
    pub fn pooled_mels(&self) -> usize {
        self.conv_layers
            .iter()
            .fold(self.n_mels, |f, l| f / l.freq_pool.max(1))
    }

    /// Per-frame feature width feeding the GRU.
    pub fn gru_input_dim(&self) -> usize {
        let last_channels = self
            .conv_layers
            .last()
            .map(|l| l.out_channels)
            .unwrap_or(self.input_channels);
        last_channels * self.pooled_mels()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.input_channels) {
            return Err(Error::Config(format!(
                "input_channels {} not in {{1, 2}}",
                self.input_channels
            )));
        }
        if self.conv_layers.is_empty() || self.class_order.is_empty() || self.gru_hidden == 0 {
            return Err(Error::Config("degenerate model config".into()));
        }
        let mut freq = self.n_mels;
        for (i, layer) in self.conv_layers.iter().enumerate() {
            if layer.kernel.0 % 2 == 0 || layer.kernel.1 % 2 == 0 {
                return Err(Error::Config(format!(
                    "conv{i} kernel {:?} must be odd",
                    layer.kernel
                )));
            }
            if layer.freq_pool == 0 || freq % layer.freq_pool != 0 {
                return Err(Error::Config(format!(
                    "conv{i} pool {} does not divide frequency extent {freq}",
                    layer.freq_pool
                )));
            }
            freq /= layer.freq_pool;
        }
        Ok(())
    }
}

/// All trainable tensors of the CRNN.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnnParams<T> {
    pub config: ModelConfig,
    pub conv: Vec<Conv2dParams<T>>,
    pub gru: BiGruParams<T>,
    pub fc: LinearParams<T>,
}

/// Gradient buffers matching [`CrnnParams`] tensor-for-tensor.
#[derive(Debug, Clone)]
pub struct CrnnGrads<T> {
    pub conv: Vec<Conv2dParams<T>>,
    pub gru: BiGruParams<T>,
    pub fc: LinearParams<T>,
}

impl<T: Scalar> CrnnParams<T> {
    pub fn new_seeded(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut conv = Vec::with_capacity(config.conv_layers.len());
        let mut c_in = config.input_channels;
        for layer in &config.conv_layers {
            conv.push(Conv2dParams::new_seeded(
                layer.out_channels,
                c_in,
                layer.kernel.0,
                layer.kernel.1,
                &mut rng,
            ));
            c_in = layer.out_channels;
        }
        let gru = BiGruParams::new_seeded(config.gru_input_dim(), config.gru_hidden, &mut rng);
        let fc = LinearParams::new_seeded(2 * config.gru_hidden, config.n_classes(), &mut rng);
        Ok(CrnnParams {
            config: config.clone(),
            conv,
            gru,
            fc,
        })
    }

    pub fn zero_grads(&self) -> CrnnGrads<T> {
        CrnnGrads {
            conv: self.conv.iter().map(|c| c.zeros_like()).collect(),
            gru: self.gru.zeros_like(),
            fc: self.fc.zeros_like(),
        }
    }

    /// Canonical (name, tensor) listing; the order is stable and shared
    /// with [`CrnnGrads::tensors`].
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.weight"), &c.weight));
            out.push((format!("conv{i}.bias"), &c.bias));
        }
        for (dir, p) in [("fwd", &self.gru.forward), ("bwd", &self.gru.backward)] {
            out.push((format!("gru.{dir}.w_input"), &p.w_input));
            out.push((format!("gru.{dir}.w_hidden"), &p.w_hidden));
            out.push((format!("gru.{dir}.b_input"), &p.b_input));
            out.push((format!("gru.{dir}.b_hidden"), &p.b_hidden));
        }
        out.push(("fc.weight".into(), &self.fc.weight));
        out.push(("fc.bias".into(), &self.fc.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for c in &mut self.conv {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for p in [&mut self.gru.forward, &mut self.gru.backward] {
            out.push(&mut p.w_input);
            out.push(&mut p.w_hidden);
            out.push(&mut p.b_input);
            out.push(&mut p.b_hidden);
        }
        out.push(&mut self.fc.weight);
        out.push(&mut self.fc.bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rebuild from a saved tensor map, verifying every shape.
    pub fn from_tensor_map(
        config: &ModelConfig,
        mut lookup: impl FnMut(&str) -> Option<Tensor<T>>,
    ) -> Result<Self> {
        let template = CrnnParams::<T>::new_seeded(config, 0)?;
        let mut params = template.clone();
        let expected: Vec<(String, Vec<usize>)> = template
            .named_tensors()
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect();
        for ((name, shape), slot) in expected.iter().zip(params.tensors_mut()) {
            let tensor = lookup(name)
                .ok_or_else(|| Error::Config(format!("weights file missing tensor '{name}'")))?;
            if tensor.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    tensor.shape(),
                    shape
                )));
            }
            *slot = tensor;
        }
        Ok(params)
    }
}

impl<T: Scalar> CrnnGrads<T> {
    /// Tensor listing aligned with [`CrnnParams::named_tensors`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out: Vec<&Tensor<T>> = Vec::new();
        for c in &self.conv {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for p in [&self.gru.forward, &self.gru.backward] {
            out.push(&p.w_input);
            out.push(&p.w_hidden);
            out.push(&p.b_input);
            out.push(&p.b_hidden);
        }
        out.push(&self.fc.weight);
        out.push(&self.fc.bias);
        out
    }

    pub fn add_assign(&mut self, other: &CrnnGrads<T>) {
        for (a, b) in self.conv.iter_mut().zip(&other.conv) {
            a.weight.add_assign(&b.weight);
            a.bias.add_assign(&b.bias);
        }
        for (a, b) in [
            (&mut self.gru.forward, &other.gru.forward),
            (&mut self.gru.backward, &other.gru.backward),
        ] {
            a.w_input.add_assign(&b.w_input);
            a.w_hidden.add_assign(&b.w_hidden);
            a.b_input.add_assign(&b.b_input);
            a.b_hidden.add_assign(&b.b_hidden);
        }
        self.fc.weight.add_assign(&other.fc.weight);
        self.fc.bias.add_assign(&other.fc.bias);
    }

    pub fn scale(&mut self, v: T) {
        for c in &mut self.conv {
            c.weight.scale(v);
            c.bias.scale(v);
        }
        for p in [&mut self.gru.forward, &mut self.gru.backward] {
            p.w_input.scale(v);
            p.w_hidden.scale(v);
            p.b_input.scale(v);
            p.b_hidden.scale(v);
        }
        self.fc.weight.scale(v);
        self.fc.bias.scale(v);
    }
}

/// Seeded model construction (f32 production weights).
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<CrnnParams<f32>> {
    CrnnParams::new_seeded(config, seed)
}

/// Forward activations kept for the backward pass.
pub struct CrnnCache<T> {
    conv_inputs: Vec<Tensor<T>>,
    conv_pre: Vec<Tensor<T>>,
    pool_argmax: Vec<Vec<u32>>,
    pool_in_shapes: Vec<Vec<usize>>,
    gru_input: Tensor<T>,
    gru_cache: GruCache<T>,
    gru_out: Tensor<T>,
    /// `[T x n_classes]` sigmoid outputs.
    pub probs: Tensor<T>,
}

/// Full forward pass over `[channels x n_mels x T]`.
pub fn forward<T: Scalar>(params: &CrnnParams<T>, input: &Tensor<T>) -> Result<CrnnCache<T>> {
    let s = input.shape();
    if s.len() != 3 || s[0] != params.config.input_channels || s[1] != params.config.n_mels {
        return Err(Error::Shape(format!(
            "model input {s:?}, expected [{} x {} x T]",
            params.config.input_channels, params.config.n_mels
        )));
    }
    let frames = s[2];
    let mut conv_inputs = Vec::new();
    let mut conv_pre = Vec::new();
    let mut pool_argmax = Vec::new();
    let mut pool_in_shapes = Vec::new();
    let mut act = input.clone();
    for (layer, conv) in params.config.conv_layers.iter().zip(&params.conv) {
        let pre = conv2d(&act, conv)?;
        let post = relu(&pre);
        let (pooled, argmax) = freq_max_pool(&post, layer.freq_pool)?;
        conv_inputs.push(act);
        pool_in_shapes.push(post.shape().to_vec());
        conv_pre.push(pre);
        pool_argmax.push(argmax);
        act = pooled;
    }
    // [C x F x T] -> [T x (C*F)]
    let (c, f) = (act.shape()[0], act.shape()[1]);
    let d = c * f;
    let mut gru_input = Tensor::zeros(vec![frames, d]);
    {
        let src = act.data();
        let dst = gru_input.data_mut();
        for ci in 0..c {
            for fi in 0..f {
                let base = (ci * f + fi) * frames;
                let col = ci * f + fi;
                for t in 0..frames {
                    dst[t * d + col] = src[base + t];
                }
            }
        }
    }
    let (gru_out, gru_cache) = bigru(&gru_input, &params.gru)?;
    let probs = linear_sigmoid(&gru_out, &params.fc)?;
    Ok(CrnnCache {
        conv_inputs,
        conv_pre,
        pool_argmax,
        pool_in_shapes,
        gru_input,
        gru_cache,
        gru_out,
        probs,
    })
}

/// Backward pass given `dL/dprobs`; returns parameter gradients and the
/// gradient w.r.t. the input features.
pub fn backward<T: Scalar>(
    params: &CrnnParams<T>,
    cache: &CrnnCache<T>,
    grad_probs: &Tensor<T>,
) -> Result<(CrnnGrads<T>, Tensor<T>)> {
    let (d_gru_out, fc_grads) =
        linear_sigmoid_backward(&cache.gru_out, &params.fc, &cache.probs, grad_probs)?;
    let (d_gru_in, gru_grads) =
        bigru_backward(&cache.gru_input, &params.gru, &cache.gru_cache, &d_gru_out)?;

    // [T x (C*F)] -> [C x F x T]
    let frames = cache.gru_input.shape()[0];
    let last_shape = {
        let s = &cache.pool_in_shapes[cache.pool_in_shapes.len() - 1];
        let pool = params.config.conv_layers.last().unwrap().freq_pool;
        vec![s[0], s[1] / pool, s[2]]
    };
    let (c, f) = (last_shape[0], last_shape[1]);
    let d = c * f;
    let mut d_act = Tensor::zeros(last_shape);
    {
        let src = d_gru_in.data();
        let dst = d_act.data_mut();
        for ci in 0..c {
            for fi in 0..f {
                let base = (ci * f + fi) * frames;
                let col = ci * f + fi;
                for t in 0..frames {
                    dst[base + t] = src[t * d + col];
                }
            }
        }
    }

    let mut conv_grads: Vec<Conv2dParams<T>> = Vec::with_capacity(params.conv.len());
    for i in (0..params.conv.len()).rev() {
        let pool = params.config.conv_layers[i].freq_pool;
        let d_post = freq_max_pool_backward(
            &cache.pool_in_shapes[i],
            pool,
            &cache.pool_argmax[i],
            &d_act,
        );
        let d_pre = relu_backward(&cache.conv_pre[i], &d_post);
        let (d_in, grads) = conv2d_backward(&cache.conv_inputs[i], &params.conv[i], &d_pre)?;
        conv_grads.push(grads);
        d_act = d_in;
    }
    conv_grads.reverse();
    Ok((
        CrnnGrads {
            conv: conv_grads,
            gru: gru_grads,
            fc: fc_grads,
        },
        d_act,
    ))
}

/// Per-frame class probabilities for one feature tensor, as a probability
/// [`FrameRoll`] in the model's class order.
pub fn predict_frames(
    params: &CrnnParams<f32>,
    norm: &Normalization,
    features: &FeatureTensor,
    hop_s: f64,
) -> Result<FrameRoll> {
    if features.channels != params.config.input_channels {
        return Err(Error::Shape(format!(
            "feature channels {} do not match model input channels {}",
            features.channels, params.config.input_channels
        )));
    }
    let mut normalized = features.clone();
    norm.apply(&mut normalized);
    let input = Tensor::from_vec(
        vec![normalized.channels, normalized.n_mels, normalized.frames],
        normalized.values,
    );
    let cache = forward(params, &input)?;
    let frames = features.frames;
    let classes = params.config.n_classes();
    let mut roll = FrameRoll::zeros(params.config.class_order.clone(), frames, hop_s);
    for t in 0..frames {
        for c in 0..classes {
            roll.set(c, t, cache.probs.data()[t * classes + c].to_f64() as f32);
        }
    }
    Ok(roll)
}

/// Clip-wise inference over a full track's features, concatenated back into
/// one probability roll. Clips follow the training segmentation (consecutive
/// windows of `clip_frames`).
pub fn predict_track(
    params: &CrnnParams<f32>,
    norm: &Normalization,
    features: &FeatureTensor,
    hop_s: f64,
    clip_frames: usize,
) -> Result<FrameRoll> {
    let total = features.frames;
    let classes = params.config.n_classes();
    let mut roll = FrameRoll::zeros(params.config.class_order.clone(), total, hop_s);
    let starts: Vec<usize> = (0..total).step_by(clip_frames.max(1)).collect();
    let pieces = crate::par::map_slice(&starts, |&start| {
        let len = clip_frames.min(total - start);
        let slice = features.slice_frames(start, len, len);
        predict_frames(params, norm, &slice, hop_s)
    });
    for (&start, piece) in starts.iter().zip(pieces) {
        let piece = piece?;
        for c in 0..classes {
            for t in 0..piece.num_frames {
                roll.set(c, start + t, piece.get(c, t));
            }
        }
    }
    Ok(roll)
}

/// Finite-difference check of the composed CRNN (tiny sizes) through the
/// focal loss: every parameter and every input cell.
pub fn grad_check_crnn(seed: u64) -> f64 {
    use crate::nn::gradcheck::{finite_diff_check, DEFAULT_STEP};
    use crate::nn::{focal_loss, Tensor as NnTensor};

    let config = ModelConfig {
        input_channels: 2,
        n_mels: 16,
        conv_layers: [4, 2, 2]
            .iter()
            .map(|&pool| ConvLayerConfig {
                out_channels: 3,
                kernel: (3, 3),
                freq_pool: pool,
            })
            .collect(),
        gru_hidden: 2,
        class_order: vec![TechniqueClass::Vibrato, TechniqueClass::Drop],
    };
    let frames = 20;
    let params = CrnnParams::<f64>::new_seeded(&config, seed).unwrap();
    let mut rng = SplitMix64::new(seed ^ 0x5eed);
    let input = NnTensor::from_vec(
        vec![2, 16, frames],
        (0..2 * 16 * frames)
            .map(|_| rng.range_f64(-1.0, 1.0))
            .collect(),
    );
    let target = NnTensor::from_vec(
        vec![frames, 2],
        (0..frames * 2).map(|_| f64::from(rng.chance(0.3))).collect(),
    );
    let mut mask = NnTensor::zeros(vec![frames, 2]);
    mask.fill(1.0);

    let cache = forward(&params, &input).unwrap();
    let (_, grad_probs) = focal_loss(&cache.probs, &target, &mask, 0.2, 2.0).unwrap();
    let (grads, grad_input) = backward(&params, &cache, &grad_probs).unwrap();

    let mut values: Vec<f64> = Vec::new();
    for (_, t) in params.named_tensors() {
        values.extend(t.data());
    }
    values.extend(input.data());
    let mut analytic: Vec<f64> = Vec::new();
    for t in grads.tensors() {
        analytic.extend(t.data());
    }
    analytic.extend(grad_input.data());

    let shapes: Vec<Vec<usize>> = params
        .named_tensors()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    finite_diff_check(
        &mut values,
        &analytic,
        |v| {
            let mut pos = 0;
            let mut rebuilt = params.clone();
            for (slot, shape) in rebuilt.tensors_mut().into_iter().zip(&shapes) {
                let len: usize = shape.iter().product();
                *slot = NnTensor::from_vec(shape.clone(), v[pos..pos + len].to_vec());
                pos += len;
            }
            let x = NnTensor::from_vec(vec![2, 16, frames], v[pos..].to_vec());
            let cache = forward(&rebuilt, &x).unwrap();
            focal_loss(&cache.probs, &target, &mask, 0.2, 2.0)
                .unwrap()
                .0
        },
        DEFAULT_STEP,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            input_channels: 1,
            n_mels: 16,
            conv_layers: [4, 2, 2]
                .iter()
                .map(|&pool| ConvLayerConfig {
                    out_channels: 4,
                    kernel: (3, 3),
                    freq_pool: pool,
                })
                .collect(),
            gru_hidden: 3,
            class_order: vec![TechniqueClass::Vibrato, TechniqueClass::Drop],
        }
    }

    #[test]
    fn default_config_shapes() {
        let config = ModelConfig::default();
        config.validate().unwrap();
        assert_eq!(config.pooled_mels(), 4);
        assert_eq!(config.gru_input_dim(), 128);
        assert_eq!(config.n_classes(), 9);
    }

    #[test]
    fn forward_output_shape() {
        let config = tiny_config();
        let params = build_model(&config, 7).unwrap();
        let input = Tensor::zeros(vec![1, 16, 25]);
        let cache = forward(&params, &input).unwrap();
        assert_eq!(cache.probs.shape(), &[25, 2]);
    }

    #[test]
    fn two_channel_input_same_output_shape() {
        let mut config = tiny_config();
        config.input_channels = 2;
        let params = build_model(&config, 7).unwrap();
        let input = Tensor::zeros(vec![2, 16, 25]);
        let cache = forward(&params, &input).unwrap();
        assert_eq!(cache.probs.shape(), &[25, 2]);
    }

    #[test]
    fn same_seed_identical_params() {
        let config = tiny_config();
        let a = build_model(&config, 42).unwrap();
        let b = build_model(&config, 42).unwrap();
        assert_eq!(a, b);
        let c = build_model(&config, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_params_predict_half() {
        let config = tiny_config();
        let mut params = build_model(&config, 1).unwrap();
        for t in params.tensors_mut() {
            t.fill(0.0);
        }
        let features = FeatureTensor {
            channels: 1,
            n_mels: 16,
            frames: 10,
            values: vec![0.3; 16 * 10],
        };
        let norm = Normalization::identity(16);
        let roll = predict_frames(&params, &norm, &features, 0.01).unwrap();
        assert!(roll.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let config = tiny_config();
        let params = build_model(&config, 1).unwrap();
        let features = FeatureTensor {
            channels: 2,
            n_mels: 16,
            frames: 10,
            values: vec![0.0; 2 * 16 * 10],
        };
        let norm = Normalization::identity(16);
        assert!(predict_frames(&params, &norm, &features, 0.01).is_err());
    }

    #[test]
    fn invalid_pool_rejected() {
        let mut config = tiny_config();
        config.n_mels = 15;
        assert!(config.validate().is_err());
        assert!(build_model(&config, 1).is_err());
    }

    #[test]
    fn prediction_deterministic() {
        let config = tiny_config();
        let params = build_model(&config, 5).unwrap();
        let features = FeatureTensor {
            channels: 1,
            n_mels: 16,
            frames: 30,
            values: (0..16 * 30).map(|i| (i as f32 * 0.01).sin()).collect(),
        };
        let norm = Normalization::identity(16);
        let a = predict_frames(&params, &norm, &features, 0.01).unwrap();
        let b = predict_frames(&params, &norm, &features, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn composed_crnn_gradients_match_finite_differences() {
        let err = grad_check_crnn(2024);
        assert!(err < 1e-4, "max rel err {err}");
    }

    #[test]
    fn tensor_map_round_trip() {
        let config = tiny_config();
        let params = build_model(&config, 9).unwrap();
        let map: std::collections::BTreeMap<String, Tensor<f32>> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let rebuilt =
            CrnnParams::from_tensor_map(&config, |name| map.get(name).cloned()).unwrap();
        assert_eq!(params, rebuilt);
    }
}
