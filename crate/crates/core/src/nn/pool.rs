//! ReLU and frequency-axis max pooling.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
    out
}

/// Gradient of [`relu`] given the pre-activation input.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    assert_eq!(input.shape(), grad_out.shape());
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= T::ZERO {
            *g = T::ZERO;
        }
    }
    grad
}

/// Non-overlapping max pool of size `pool` over the frequency axis of a
/// `[C x F x T]` tensor. Returns the pooled tensor and the winning source
/// frequency index per output cell (first winner on ties).
pub fn freq_max_pool<T: Scalar>(
    input: &Tensor<T>,
    pool: usize,
) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("freq_max_pool input {s:?}")));
    }
    let (c, nf, nt) = (s[0], s[1], s[2]);
    if pool == 0 || nf % pool != 0 {
        return Err(Error::Shape(format!(
            "pool {pool} does not divide frequency extent {nf}"
        )));
    }
    let nf_out = nf / pool;
    let x = input.data();
    let mut out = Tensor::zeros(vec![c, nf_out, nt]);
    let mut argmax = vec![0u32; c * nf_out * nt];
    let o = out.data_mut();
    for ci in 0..c {
        for fo in 0..nf_out {
            let out_base = (ci * nf_out + fo) * nt;
            for t in 0..nt {
                let mut best = x[(ci * nf + fo * pool) * nt + t];
                let mut best_f = (fo * pool) as u32;
                for k in 1..pool {
                    let f = fo * pool + k;
                    let v = x[(ci * nf + f) * nt + t];
                    if v > best {
                        best = v;
                        best_f = f as u32;
                    }
                }
                o[out_base + t] = best;
                argmax[out_base + t] = best_f;
            }
        }
    }
    Ok((out, argmax))
}

/// Scatter pooled gradients back to the winning input cells.
pub fn freq_max_pool_backward<T: Scalar>(
    input_shape: &[usize],
    pool: usize,
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (c, nf, nt) = (input_shape[0], input_shape[1], input_shape[2]);
    let nf_out = nf / pool;
    debug_assert_eq!(grad_out.shape(), [c, nf_out, nt]);
    let mut grad = Tensor::zeros(input_shape.to_vec());
    let gi = grad.data_mut();
    let g = grad_out.data();
    for ci in 0..c {
        for fo in 0..nf_out {
            let out_base = (ci * nf_out + fo) * nt;
            for t in 0..nt {
                let f = argmax[out_base + t] as usize;
                gi[(ci * nf + f) * nt + t] += g[out_base + t];
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_picks_max_and_routes_grad() {
        let input = Tensor::<f64>::from_vec(
            vec![1, 4, 2],
            vec![
                1.0, 8.0, // f0
                3.0, 2.0, // f1
                -1.0, 0.0, // f2
                5.0, -2.0, // f3
            ],
        );
        let (out, argmax) = freq_max_pool(&input, 2).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        assert_eq!(out.data(), &[3.0, 8.0, 5.0, 0.0]);
        assert_eq!(argmax, vec![1, 0, 3, 2]);

        let grad_out = Tensor::from_vec(vec![1, 2, 2], vec![10.0, 20.0, 30.0, 40.0]);
        let grad = freq_max_pool_backward(&[1, 4, 2], 2, &argmax, &grad_out);
        assert_eq!(
            grad.data(),
            &[0.0, 20.0, 10.0, 0.0, 0.0, 40.0, 30.0, 0.0]
        );
    }

    #[test]
    fn pool_rejects_non_dividing_extent() {
        let input = Tensor::<f64>::zeros(vec![1, 5, 2]);
        assert!(freq_max_pool(&input, 2).is_err());
    }

    #[test]
    fn relu_clamps_and_gates() {
        let input = Tensor::<f64>::from_vec(vec![4], vec![-1.0, 0.0, 0.5, 2.0]);
        let out = relu(&input);
        assert_eq!(out.data(), &[0.0, 0.0, 0.5, 2.0]);
        let grad_out = Tensor::from_vec(vec![4], vec![1.0; 4]);
        let grad = relu_backward(&input, &grad_out);
        assert_eq!(grad.data(), &[0.0, 0.0, 1.0, 1.0]);
    }
}
