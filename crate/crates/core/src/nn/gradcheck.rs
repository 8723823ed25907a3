//! Central finite-difference verification of the analytic gradients.
//!
//! Each check builds a seeded random instance, computes analytic gradients
//! through the layer's backward pass for a scalar projection loss, then
//! perturbs every parameter and input cell by `+-h` (64-bit, h = 1e-5) and
//! compares. Cells where `|analytic| + |numeric| < 1e-8` are skipped; the
//! returned value is the maximum relative error over all other cells.

use crate::rng::SplitMix64;

use super::conv::{conv2d, conv2d_backward, Conv2dParams};
use super::gru::{bigru, bigru_backward, BiGruParams, GruParams};
use super::linear::{linear_sigmoid, linear_sigmoid_backward, LinearParams};
use super::loss::{bce_loss, focal_loss};
use super::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
const SKIP_BELOW: f64 = 1e-8;

/// Max relative error between `analytic` and central differences of `f`
/// around `values`.
pub fn finite_diff_check<F>(values: &mut [f64], analytic: &[f64], mut f: F, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(values.len(), analytic.len());
    let mut max_rel = 0.0f64;
    for i in 0..values.len() {
        let saved = values[i];
        values[i] = saved + h;
        let up = f(values);
        values[i] = saved - h;
        let down = f(values);
        values[i] = saved;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        if a.abs() + numeric.abs() < SKIP_BELOW {
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}

fn random_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::from_vec(
        shape.to_vec(),
        (0..len).map(|_| rng.range_f64(-1.0, 1.0)).collect(),
    )
}

fn projection(shape: &[usize], rng: &mut SplitMix64) -> Tensor<f64> {
    random_tensor(shape, rng)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Gradient check of conv2d over weight, bias, and input.
pub fn check_conv2d(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (c_in, c_out, nf, nt) = (2, 3, 5, 6);
    let params = Conv2dParams::<f64>::new_seeded(c_out, c_in, 3, 3, &mut rng);
    let input = random_tensor(&[c_in, nf, nt], &mut rng);
    let proj = projection(&[c_out, nf, nt], &mut rng);

    let (grad_input, grads) = conv2d_backward(&input, &params, &proj).unwrap();
    let mut values: Vec<f64> = Vec::new();
    values.extend(params.weight.data());
    values.extend(params.bias.data());
    values.extend(input.data());
    let mut analytic: Vec<f64> = Vec::new();
    analytic.extend(grads.weight.data());
    analytic.extend(grads.bias.data());
    analytic.extend(grad_input.data());

    let (wlen, blen) = (params.weight.len(), params.bias.len());
    let wshape = params.weight.shape().to_vec();
    let ishape = input.shape().to_vec();
    finite_diff_check(
        &mut values,
        &analytic,
        |v| {
            let p = Conv2dParams {
                weight: Tensor::from_vec(wshape.clone(), v[..wlen].to_vec()),
                bias: Tensor::from_vec(vec![blen], v[wlen..wlen + blen].to_vec()),
            };
            let x = Tensor::from_vec(ishape.clone(), v[wlen + blen..].to_vec());
            dot(&conv2d(&x, &p).unwrap(), &proj)
        },
        DEFAULT_STEP,
    )
}

fn flatten_gru(p: &GruParams<f64>, out: &mut Vec<f64>) {
    out.extend(p.w_input.data());
    out.extend(p.w_hidden.data());
    out.extend(p.b_input.data());
    out.extend(p.b_hidden.data());
}

fn unflatten_gru(v: &[f64], d: usize, h: usize) -> (GruParams<f64>, usize) {
    let (wi, wh, b) = (3 * h * d, 3 * h * h, 3 * h);
    let mut pos = 0;
    let take = |pos: &mut usize, n: usize| {
        let s = &v[*pos..*pos + n];
        *pos += n;
        s.to_vec()
    };
    let params = GruParams {
        w_input: Tensor::from_vec(vec![3 * h, d], take(&mut pos, wi)),
        w_hidden: Tensor::from_vec(vec![3 * h, h], take(&mut pos, wh)),
        b_input: Tensor::from_vec(vec![3 * h], take(&mut pos, b)),
        b_hidden: Tensor::from_vec(vec![3 * h], take(&mut pos, b)),
    };
    (params, pos)
}

/// Gradient check of the bidirectional GRU over all weights, biases, and
/// the input sequence (backprop through time).
pub fn check_bigru(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (steps, d, h) = (4, 3, 2);
    let params = BiGruParams::<f64>::new_seeded(d, h, &mut rng);
    let input = random_tensor(&[steps, d], &mut rng);
    let proj = projection(&[steps, 2 * h], &mut rng);

    let (_, cache) = bigru(&input, &params).unwrap();
    let (grad_input, grads) = bigru_backward(&input, &params, &cache, &proj).unwrap();

    let mut values = Vec::new();
    flatten_gru(&params.forward, &mut values);
    flatten_gru(&params.backward, &mut values);
    values.extend(input.data());
    let mut analytic = Vec::new();
    flatten_gru(&grads.forward, &mut analytic);
    flatten_gru(&grads.backward, &mut analytic);
    analytic.extend(grad_input.data());

    finite_diff_check(
        &mut values,
        &analytic,
        |v| {
            let (fwd, used) = unflatten_gru(v, d, h);
            let (bwd, used2) = unflatten_gru(&v[used..], d, h);
            let x = Tensor::from_vec(vec![steps, d], v[used + used2..].to_vec());
            let p = BiGruParams {
                forward: fwd,
                backward: bwd,
            };
            dot(&bigru(&x, &p).unwrap().0, &proj)
        },
        DEFAULT_STEP,
    )
}

/// Gradient check of the linear+sigmoid head.
pub fn check_linear_sigmoid(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let (steps, d, classes) = (5, 4, 3);
    let params = LinearParams::<f64>::new_seeded(d, classes, &mut rng);
    let input = random_tensor(&[steps, d], &mut rng);
    let proj = projection(&[steps, classes], &mut rng);

    let out = linear_sigmoid(&input, &params).unwrap();
    let (grad_input, grads) = linear_sigmoid_backward(&input, &params, &out, &proj).unwrap();

    let mut values: Vec<f64> = Vec::new();
    values.extend(params.weight.data());
    values.extend(params.bias.data());
    values.extend(input.data());
    let mut analytic: Vec<f64> = Vec::new();
    analytic.extend(grads.weight.data());
    analytic.extend(grads.bias.data());
    analytic.extend(grad_input.data());

    let wlen = params.weight.len();
    finite_diff_check(
        &mut values,
        &analytic,
        |v| {
            let p = LinearParams {
                weight: Tensor::from_vec(vec![classes, d], v[..wlen].to_vec()),
                bias: Tensor::from_vec(vec![classes], v[wlen..wlen + classes].to_vec()),
            };
            let x = Tensor::from_vec(vec![steps, d], v[wlen + classes..].to_vec());
            dot(&linear_sigmoid(&x, &p).unwrap(), &proj)
        },
        DEFAULT_STEP,
    )
}

fn check_loss(seed: u64, alpha_gamma: Option<(f64, f64)>) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let n = 40;
    let pred = Tensor::from_vec(
        vec![n],
        (0..n).map(|_| rng.range_f64(0.05, 0.95)).collect(),
    );
    let target = Tensor::from_vec(vec![n], (0..n).map(|_| f64::from(rng.chance(0.3))).collect());
    let mut mask = Tensor::zeros(vec![n]);
    for m in mask.data_mut() {
        *m = f64::from(rng.chance(0.8));
    }
    if mask.data().iter().all(|&m| m == 0.0) {
        mask.data_mut()[0] = 1.0;
    }
    let evaluate = |p: &Tensor<f64>| match alpha_gamma {
        Some((a, g)) => focal_loss(p, &target, &mask, a, g).unwrap(),
        None => bce_loss(p, &target, &mask).unwrap(),
    };
    let (_, grad) = evaluate(&pred);
    let mut values = pred.data().to_vec();
    let analytic = grad.data().to_vec();
    finite_diff_check(
        &mut values,
        &analytic,
        |v| evaluate(&Tensor::from_vec(vec![n], v.to_vec())).0,
        DEFAULT_STEP,
    )
}

/// Gradient check of masked BCE w.r.t. predictions.
pub fn check_bce(seed: u64) -> f64 {
    check_loss(seed, None)
}

/// Gradient check of masked focal loss w.r.t. predictions.
pub fn check_focal(seed: u64) -> f64 {
    check_loss(seed, Some((0.2, 2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        for seed in [1, 2, 3] {
            let err = check_conv2d(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn bigru_gradients_match_finite_differences() {
        for seed in [4, 5, 6] {
            let err = check_bigru(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn linear_sigmoid_gradients_match_finite_differences() {
        for seed in [7, 8, 9] {
            let err = check_linear_sigmoid(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        for seed in [10, 11, 12] {
            let bce = check_bce(seed);
            assert!(bce < 1e-6, "bce seed {seed}: {bce}");
            let focal = check_focal(seed);
            assert!(focal < 1e-4, "focal seed {seed}: {focal}");
        }
    }
}
