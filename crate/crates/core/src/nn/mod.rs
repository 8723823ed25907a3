//! Self-contained neural engine for the CRNN detector.
//!
//! Layers implement forward passes and exact analytic backward passes over a
//! plain row-major [`Tensor`]. Everything is generic over [`Scalar`] so the
//! same code trains in f32 and gradient-checks in f64 against central finite
//! differences (see [`gradcheck`]). No external ML runtime is involved; the
//! gradient checks are the correctness story.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod gru;
pub mod linear;
pub mod loss;
pub mod pool;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::{conv2d, conv2d_backward, Conv2dParams};
pub use gru::{bigru, bigru_backward, BiGruParams, GruCache, GruParams};
pub use linear::{linear_sigmoid, linear_sigmoid_backward, LinearParams};
pub use loss::{bce_loss, focal_loss, LossConfig, LossKind};
pub use pool::{freq_max_pool, freq_max_pool_backward, relu, relu_backward};
pub use tensor::{Scalar, Tensor};

use crate::rng::SplitMix64;

/// Glorot-uniform initialization: every value uniform in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, drawn from the
/// seeded splitmix64 stream. Bias tensors use the fans of their layer.
pub fn glorot_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut SplitMix64,
) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data: Vec<T> = (0..len)
        .map(|_| T::from_f64(rng.range_f64(-bound, bound)))
        .collect();
    Tensor::from_vec(shape.to_vec(), data)
}
