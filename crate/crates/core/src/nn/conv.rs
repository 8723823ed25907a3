//! 2-D convolution (cross-correlation) with same padding and stride 1.
//!
//! Inputs are `[channels x freq x time]`; kernels must be odd-sized so the
//! output keeps the input's spatial extent. The time axis is the innermost
//! (contiguous) dimension, which keeps the hot loops vectorizable.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::tensor::{Scalar, Tensor};
use super::glorot_uniform;

/// Kernel and bias of one convolutional layer. The same struct doubles as
/// the gradient buffer returned by [`conv2d_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams<T> {
    /// `[c_out x c_in x kf x kt]`
    pub weight: Tensor<T>,
    /// `[c_out]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2dParams<T> {
    pub fn new_seeded(
        c_out: usize,
        c_in: usize,
        kf: usize,
        kt: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        assert!(kf % 2 == 1 && kt % 2 == 1, "kernel must be odd-sized");
        let fan_in = c_in * kf * kt;
        let fan_out = c_out * kf * kt;
        Conv2dParams {
            weight: glorot_uniform(&[c_out, c_in, kf, kt], fan_in, fan_out, rng),
            bias: glorot_uniform(&[c_out], fan_in, fan_out, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Conv2dParams {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.weight.shape();
        (s[0], s[1], s[2], s[3])
    }
}

fn check_input<T: Scalar>(
    input: &Tensor<T>,
    params: &Conv2dParams<T>,
) -> Result<(usize, usize, usize)> {
    let (c_out, c_in, kf, kt) = params.dims();
    if kf % 2 == 0 || kt % 2 == 0 {
        return Err(Error::Shape(format!("even kernel {kf}x{kt}")));
    }
    let s = input.shape();
    if s.len() != 3 || s[0] != c_in {
        return Err(Error::Shape(format!(
            "conv2d input {s:?} incompatible with kernel [{c_out}x{c_in}x{kf}x{kt}]"
        )));
    }
    Ok((s[0], s[1], s[2]))
}

/// Forward convolution: `[c_in x F x T] -> [c_out x F x T]`. Output
/// channels are independent, so they fan out across threads.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, params: &Conv2dParams<T>) -> Result<Tensor<T>> {
    let (c_in, nf, nt) = check_input(input, params)?;
    let (c_out, _, kf, kt) = params.dims();
    let (pf, pt) = (kf / 2, kt / 2);
    let x = input.data();
    let w = params.weight.data();
    let b = params.bias.data();
    let mut out = Tensor::zeros(vec![c_out, nf, nt]);
    crate::par::for_each_chunk_mut(out.data_mut(), nf * nt, |co, o| {
        o.fill(b[co]);
        for ci in 0..c_in {
            for df in 0..kf {
                for dt in 0..kt {
                    let wv = w[((co * c_in + ci) * kf + df) * kt + dt];
                    if wv == T::ZERO {
                        continue;
                    }
                    let shift = dt as isize - pt as isize;
                    let t_lo = (-shift).max(0) as usize;
                    let t_hi = (nt as isize).min(nt as isize - shift) as usize;
                    if t_lo >= t_hi {
                        continue;
                    }
                    for f_out in 0..nf {
                        let f_in = f_out as isize + df as isize - pf as isize;
                        if f_in < 0 || f_in >= nf as isize {
                            continue;
                        }
                        let in_base = (ci * nf + f_in as usize) * nt;
                        let out_base = f_out * nt;
                        let src = &x[(in_base as isize + t_lo as isize + shift) as usize
                            ..(in_base as isize + t_hi as isize + shift) as usize];
                        let dst = &mut o[out_base + t_lo..out_base + t_hi];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * *s;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Backward convolution: exact gradients w.r.t. input, weight, and bias.
///
/// Two passes, each over disjoint output blocks: weight/bias gradients fan
/// out across output channels, the input gradient across input channels.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &Conv2dParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Conv2dParams<T>)> {
    let (c_in, nf, nt) = check_input(input, params)?;
    let (c_out, _, kf, kt) = params.dims();
    if grad_out.shape() != [c_out, nf, nt] {
        return Err(Error::Shape(format!(
            "conv2d grad_out {:?}, expected [{c_out}, {nf}, {nt}]",
            grad_out.shape()
        )));
    }
    let (pf, pt) = (kf / 2, kt / 2);
    let x = input.data();
    let w = params.weight.data();
    let g = grad_out.data();

    let mut grads = params.zeros_like();
    let mut grad_input = input.zeros_like();

    let bounds = |dt: usize| {
        let shift = dt as isize - pt as isize;
        let t_lo = (-shift).max(0) as usize;
        let t_hi = ((nt as isize).min(nt as isize - shift)).max(0) as usize;
        (shift, t_lo, t_hi)
    };

    // Pass 1: dW and dbias, one output channel per chunk.
    let gb = std::sync::Mutex::new(vec![T::ZERO; c_out]);
    crate::par::for_each_chunk_mut(grads.weight.data_mut(), c_in * kf * kt, |co, gw| {
        let mut bias_acc = T::ZERO;
        for v in &g[co * nf * nt..(co + 1) * nf * nt] {
            bias_acc += *v;
        }
        gb.lock().unwrap()[co] = bias_acc;
        for ci in 0..c_in {
            for df in 0..kf {
                for dt in 0..kt {
                    let (shift, t_lo, t_hi) = bounds(dt);
                    if t_lo >= t_hi {
                        continue;
                    }
                    let mut w_acc = T::ZERO;
                    for f_out in 0..nf {
                        let f_in = f_out as isize + df as isize - pf as isize;
                        if f_in < 0 || f_in >= nf as isize {
                            continue;
                        }
                        let in_base = ((ci * nf + f_in as usize) * nt) as isize + shift;
                        let out_base = (co * nf + f_out) * nt;
                        let xs = &x[(in_base + t_lo as isize) as usize
                            ..(in_base + t_hi as isize) as usize];
                        let gs = &g[out_base + t_lo..out_base + t_hi];
                        for (xv, gv) in xs.iter().zip(gs) {
                            w_acc += *xv * *gv;
                        }
                    }
                    gw[(ci * kf + df) * kt + dt] = w_acc;
                }
            }
        }
    });
    grads.bias = Tensor::from_vec(vec![c_out], gb.into_inner().unwrap());

    // Pass 2: dInput, one input channel per chunk.
    crate::par::for_each_chunk_mut(grad_input.data_mut(), nf * nt, |ci, gi| {
        for co in 0..c_out {
            for df in 0..kf {
                for dt in 0..kt {
                    let wv = w[((co * c_in + ci) * kf + df) * kt + dt];
                    if wv == T::ZERO {
                        continue;
                    }
                    let (shift, t_lo, t_hi) = bounds(dt);
                    if t_lo >= t_hi {
                        continue;
                    }
                    for f_out in 0..nf {
                        let f_in = f_out as isize + df as isize - pf as isize;
                        if f_in < 0 || f_in >= nf as isize {
                            continue;
                        }
                        let in_base = (f_in as usize * nt) as isize + shift;
                        let out_base = (co * nf + f_out) * nt;
                        let gs = &g[out_base + t_lo..out_base + t_hi];
                        let is = &mut gi[(in_base + t_lo as isize) as usize
                            ..(in_base + t_hi as isize) as usize];
                        for (iv, gv) in is.iter_mut().zip(gs) {
                            *iv += wv * *gv;
                        }
                    }
                }
            }
        }
    });
    Ok((grad_input, grads))
}
