//! Per-frame affine map followed by a logistic sigmoid.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::tensor::{sigmoid, Scalar, Tensor};
use super::glorot_uniform;

/// Weight and bias of the output layer; doubles as its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    /// `[classes x input_dim]`
    pub weight: Tensor<T>,
    /// `[classes]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> LinearParams<T> {
    pub fn new_seeded(input_dim: usize, classes: usize, rng: &mut SplitMix64) -> Self {
        LinearParams {
            weight: glorot_uniform(&[classes, input_dim], input_dim, classes, rng),
            bias: glorot_uniform(&[classes], input_dim, classes, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LinearParams {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }
}

fn check<T: Scalar>(input: &Tensor<T>, params: &LinearParams<T>) -> Result<(usize, usize, usize)> {
    let s = input.shape();
    let w = params.weight.shape();
    if s.len() != 2 || s[1] != w[1] {
        return Err(Error::Shape(format!(
            "linear input {s:?} incompatible with weight {w:?}"
        )));
    }
    Ok((s[0], s[1], w[0]))
}

/// `[T x D] -> [T x C]`, every output strictly in (0, 1).
pub fn linear_sigmoid<T: Scalar>(input: &Tensor<T>, params: &LinearParams<T>) -> Result<Tensor<T>> {
    let (steps, d, classes) = check(input, params)?;
    let x = input.data();
    let w = params.weight.data();
    let b = params.bias.data();
    let mut out = Tensor::zeros(vec![steps, classes]);
    let o = out.data_mut();
    for t in 0..steps {
        let xt = &x[t * d..(t + 1) * d];
        for c in 0..classes {
            let row = &w[c * d..(c + 1) * d];
            let mut acc = b[c];
            for (a, v) in row.iter().zip(xt) {
                acc += *a * *v;
            }
            o[t * classes + c] = sigmoid(acc).clamp_unit_open();
        }
    }
    Ok(out)
}

/// Backward through sigmoid and the affine map. `output` must be the value
/// returned by [`linear_sigmoid`] for the same input.
pub fn linear_sigmoid_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &LinearParams<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, LinearParams<T>)> {
    let (steps, d, classes) = check(input, params)?;
    if grad_out.shape() != [steps, classes] || output.shape() != [steps, classes] {
        return Err(Error::Shape(format!(
            "linear backward: grad_out {:?}, expected [{steps}, {classes}]",
            grad_out.shape()
        )));
    }
    let x = input.data();
    let w = params.weight.data();
    let y = output.data();
    let g = grad_out.data();
    let mut grads = params.zeros_like();
    let mut grad_input = input.zeros_like();
    let gw = grads.weight.data_mut();
    let gb = grads.bias.data_mut();
    let gi = grad_input.data_mut();
    for t in 0..steps {
        let xt = &x[t * d..(t + 1) * d];
        for c in 0..classes {
            let yv = y[t * classes + c];
            let ds = g[t * classes + c] * yv * (T::ONE - yv);
            if ds == T::ZERO {
                continue;
            }
            gb[c] += ds;
            let wrow = &w[c * d..(c + 1) * d];
            let grow = &mut gw[c * d..(c + 1) * d];
            let girow = &mut gi[t * d..(t + 1) * d];
            for k in 0..d {
                grow[k] += ds * xt[k];
                girow[k] += ds * wrow[k];
            }
        }
    }
    Ok((grad_input, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_half() {
        let params = LinearParams::<f64> {
            weight: Tensor::zeros(vec![3, 4]),
            bias: Tensor::zeros(vec![3]),
        };
        let input = Tensor::from_vec(vec![2, 4], vec![1.0; 8]);
        let out = linear_sigmoid(&input, &params).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn large_negative_bias_drives_output_to_zero() {
        let mut params = LinearParams::<f64> {
            weight: Tensor::zeros(vec![1, 2]),
            bias: Tensor::zeros(vec![1]),
        };
        let input = Tensor::zeros(vec![1, 2]);
        let mut prev = 1.0;
        for bias in [-1.0, -5.0, -20.0, -80.0] {
            params.bias.data_mut()[0] = bias;
            let out = linear_sigmoid(&input, &params).unwrap();
            assert!(out.data()[0] < prev);
            prev = out.data()[0];
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn outputs_strictly_inside_unit_interval() {
        let mut rng = SplitMix64::new(5);
        let params = LinearParams::<f32>::new_seeded(8, 4, &mut rng);
        let input = Tensor::from_vec(
            vec![16, 8],
            (0..128).map(|i| ((i * 2654435761usize) % 97) as f32 - 48.0).collect(),
        );
        let out = linear_sigmoid(&input, &params).unwrap();
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn rejects_dim_mismatch() {
        let mut rng = SplitMix64::new(6);
        let params = LinearParams::<f64>::new_seeded(8, 4, &mut rng);
        let input = Tensor::zeros(vec![5, 7]);
        assert!(linear_sigmoid(&input, &params).is_err());
    }
}
