//! Bidirectional GRU with exact backpropagation through time.
//!
//! Gate equations (gate blocks ordered r, z, n in the stacked matrices):
//!
//! ```text
//! r_t = sigmoid(W_ir x_t + b_ir + W_hr h_{t-1} + b_hr)
//! z_t = sigmoid(W_iz x_t + b_iz + W_hz h_{t-1} + b_hz)
//! n_t = tanh(W_in x_t + b_in + r_t * (W_hn h_{t-1} + b_hn))
//! h_t = (1 - z_t) * n_t + z_t * h_{t-1}
//! ```
//!
//! The initial state is zero. The bidirectional wrapper runs one cell
//! forward and an independent cell over the reversed sequence, and
//! concatenates the two states per timestep: `[T x D] -> [T x 2H]`.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::tensor::{sigmoid, Scalar, Tensor};
use super::glorot_uniform;

/// One direction's parameters; doubles as its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    /// `[3H x D]`, rows stacked r, z, n.
    pub w_input: Tensor<T>,
    /// `[3H x H]`, rows stacked r, z, n.
    pub w_hidden: Tensor<T>,
    /// `[3H]`
    pub b_input: Tensor<T>,
    /// `[3H]`
    pub b_hidden: Tensor<T>,
}

impl<T: Scalar> GruParams<T> {
    pub fn new_seeded(input_dim: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        GruParams {
            w_input: glorot_uniform(&[3 * hidden, input_dim], input_dim, hidden, rng),
            w_hidden: glorot_uniform(&[3 * hidden, hidden], hidden, hidden, rng),
            b_input: glorot_uniform(&[3 * hidden], input_dim, hidden, rng),
            b_hidden: glorot_uniform(&[3 * hidden], hidden, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GruParams {
            w_input: self.w_input.zeros_like(),
            w_hidden: self.w_hidden.zeros_like(),
            b_input: self.b_input.zeros_like(),
            b_hidden: self.b_hidden.zeros_like(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[1]
    }
}

/// Both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGruParams<T> {
    pub forward: GruParams<T>,
    pub backward: GruParams<T>,
}

impl<T: Scalar> BiGruParams<T> {
    pub fn new_seeded(input_dim: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        BiGruParams {
            forward: GruParams::new_seeded(input_dim, hidden, rng),
            backward: GruParams::new_seeded(input_dim, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        BiGruParams {
            forward: self.forward.zeros_like(),
            backward: self.backward.zeros_like(),
        }
    }
}

/// Per-timestep activations of one direction, indexed in processing order.
#[derive(Debug, Clone)]
pub struct DirCache<T> {
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    /// `W_hn h_{t-1} + b_hn`, needed for the reset-gate gradient.
    c: Vec<T>,
    h: Vec<T>,
}

/// Forward activations of both directions, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    fwd: DirCache<T>,
    bwd: DirCache<T>,
    steps: usize,
}

/// `w [R x C] @ v [C] + accumulate into out [R]`.
fn matvec_acc<T: Scalar>(w: &[T], rows: usize, cols: usize, v: &[T], out: &mut [T]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::ZERO;
        for (a, b) in row.iter().zip(v) {
            acc += *a * *b;
        }
        out[r] += acc;
    }
}

/// `w^T [C x R] @ u [R] + accumulate into out [C]`.
fn matvec_t_acc<T: Scalar>(w: &[T], rows: usize, cols: usize, u: &[T], out: &mut [T]) {
    for r in 0..rows {
        let uv = u[r];
        if uv == T::ZERO {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += uv * *a;
        }
    }
}

/// `dw [R x C] += u [R] outer v [C]`.
fn outer_acc<T: Scalar>(dw: &mut [T], rows: usize, cols: usize, u: &[T], v: &[T]) {
    for r in 0..rows {
        let uv = u[r];
        if uv == T::ZERO {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(v) {
            *o += uv * *b;
        }
    }
}

fn run_direction<T: Scalar>(
    input: &Tensor<T>,
    params: &GruParams<T>,
    reverse: bool,
    out: &mut [T],
    out_offset: usize,
    out_stride: usize,
) -> DirCache<T> {
    debug_assert!(out_stride >= params.hidden() + out_offset);
    let steps = input.shape()[0];
    let d = input.shape()[1];
    let h = params.hidden();
    let x = input.data();
    let mut cache = DirCache {
        r: vec![T::ZERO; steps * h],
        z: vec![T::ZERO; steps * h],
        n: vec![T::ZERO; steps * h],
        c: vec![T::ZERO; steps * h],
        h: vec![T::ZERO; steps * h],
    };
    let mut gates = vec![T::ZERO; 3 * h];
    let mut h_prev = vec![T::ZERO; h];
    for s in 0..steps {
        let t = if reverse { steps - 1 - s } else { s };
        let xt = &x[t * d..(t + 1) * d];
        // gates = W_i x + b_i  (input part)
        gates.copy_from_slice(params.b_input.data());
        matvec_acc(params.w_input.data(), 3 * h, d, xt, &mut gates);
        // hidden part: r,z add directly; the n block is cached separately.
        let mut gh = params.b_hidden.data().to_vec();
        matvec_acc(params.w_hidden.data(), 3 * h, h, &h_prev, &mut gh);

        let base = s * h;
        for k in 0..h {
            let r = sigmoid(gates[k] + gh[k]);
            let z = sigmoid(gates[h + k] + gh[h + k]);
            let c = gh[2 * h + k];
            let n = (gates[2 * h + k] + r * c).tanh();
            let hv = (T::ONE - z) * n + z * h_prev[k];
            cache.r[base + k] = r;
            cache.z[base + k] = z;
            cache.c[base + k] = c;
            cache.n[base + k] = n;
            cache.h[base + k] = hv;
            out[t * out_stride + out_offset + k] = hv;
        }
        h_prev.copy_from_slice(&cache.h[base..base + h]);
    }
    cache
}

/// Bidirectional forward: `[T x D] -> [T x 2H]` plus the activation cache.
pub fn bigru<T: Scalar>(
    input: &Tensor<T>,
    params: &BiGruParams<T>,
) -> Result<(Tensor<T>, GruCache<T>)> {
    let s = input.shape();
    if s.len() != 2 || s[0] == 0 {
        return Err(Error::Shape(format!("bigru input {s:?}")));
    }
    if s[1] != params.forward.input_dim() || s[1] != params.backward.input_dim() {
        return Err(Error::Shape(format!(
            "bigru input dim {} does not match params {}",
            s[1],
            params.forward.input_dim()
        )));
    }
    let steps = s[0];
    let h = params.forward.hidden();
    // The directions are independent; run them concurrently into separate
    // buffers and interleave afterwards.
    let mut half_f = vec![T::ZERO; steps * h];
    let mut half_b = vec![T::ZERO; steps * h];
    let (fwd, bwd) = crate::par::join(
        || run_direction(input, &params.forward, false, &mut half_f, 0, h),
        || run_direction(input, &params.backward, true, &mut half_b, 0, h),
    );
    let mut out = Tensor::zeros(vec![steps, 2 * h]);
    let o = out.data_mut();
    for t in 0..steps {
        o[t * 2 * h..t * 2 * h + h].copy_from_slice(&half_f[t * h..(t + 1) * h]);
        o[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&half_b[t * h..(t + 1) * h]);
    }
    Ok((out, GruCache { fwd, bwd, steps }))
}

#[allow(clippy::too_many_arguments)]
fn backward_direction<T: Scalar>(
    input: &Tensor<T>,
    params: &GruParams<T>,
    cache: &DirCache<T>,
    reverse: bool,
    grad_out: &[T],
    out_offset: usize,
    out_stride: usize,
    grads: &mut GruParams<T>,
    grad_input: &mut Tensor<T>,
) {
    let steps = input.shape()[0];
    let d = input.shape()[1];
    let h = params.hidden();
    let x = input.data();
    let gi = grad_input.data_mut();

    let mut dh_next = vec![T::ZERO; h];
    let mut da = vec![T::ZERO; 3 * h]; // pre-activation grads: r, z, n blocks
    let mut dhh = vec![T::ZERO; 3 * h]; // hidden-path grads: r, z, c blocks
    let zero = vec![T::ZERO; h];
    for s in (0..steps).rev() {
        let t = if reverse { steps - 1 - s } else { s };
        let base = s * h;
        let h_prev: &[T] = if s == 0 {
            &zero
        } else {
            &cache.h[(s - 1) * h..s * h]
        };
        for k in 0..h {
            let r = cache.r[base + k];
            let z = cache.z[base + k];
            let n = cache.n[base + k];
            let c = cache.c[base + k];
            let dh = grad_out[t * out_stride + out_offset + k] + dh_next[k];
            let dn = dh * (T::ONE - z);
            let dz = dh * (h_prev[k] - n);
            let da_n = dn * (T::ONE - n * n);
            let dr = da_n * c;
            let dc = da_n * r;
            let da_z = dz * z * (T::ONE - z);
            let da_r = dr * r * (T::ONE - r);
            da[k] = da_r;
            da[h + k] = da_z;
            da[2 * h + k] = da_n;
            dhh[k] = da_r;
            dhh[h + k] = da_z;
            dhh[2 * h + k] = dc;
            // Direct state pass-through; the W_h^T terms come below.
            dh_next[k] = dh * z;
        }
        for k in 0..3 * h {
            grads.b_input.data_mut()[k] += da[k];
            grads.b_hidden.data_mut()[k] += dhh[k];
        }
        let xt = &x[t * d..(t + 1) * d];
        outer_acc(grads.w_input.data_mut(), 3 * h, d, &da, xt);
        outer_acc(grads.w_hidden.data_mut(), 3 * h, h, &dhh, h_prev);
        matvec_t_acc(
            params.w_input.data(),
            3 * h,
            d,
            &da,
            &mut gi[t * d..(t + 1) * d],
        );
        matvec_t_acc(params.w_hidden.data(), 3 * h, h, &dhh, &mut dh_next);
    }
}

/// Backprop through time for both directions. Returns the input gradient
/// and the parameter gradients.
pub fn bigru_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &BiGruParams<T>,
    cache: &GruCache<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, BiGruParams<T>)> {
    let steps = input.shape()[0];
    let h = params.forward.hidden();
    if cache.steps != steps || grad_out.shape() != [steps, 2 * h] {
        return Err(Error::Shape(format!(
            "bigru backward: grad_out {:?}, expected [{steps}, {}]",
            grad_out.shape(),
            2 * h
        )));
    }
    let mut grads = params.zeros_like();
    let mut gi_f = input.zeros_like();
    let mut gi_b = input.zeros_like();
    let grads_f = &mut grads.forward;
    let grads_b = &mut grads.backward;
    crate::par::join(
        || {
            backward_direction(
                input,
                &params.forward,
                &cache.fwd,
                false,
                grad_out.data(),
                0,
                2 * h,
                grads_f,
                &mut gi_f,
            )
        },
        || {
            backward_direction(
                input,
                &params.backward,
                &cache.bwd,
                true,
                grad_out.data(),
                h,
                2 * h,
                grads_b,
                &mut gi_b,
            )
        },
    );
    gi_f.add_assign(&gi_b);
    Ok((gi_f, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(d: usize, h: usize) -> GruParams<f64> {
        GruParams {
            w_input: Tensor::zeros(vec![3 * h, d]),
            w_hidden: Tensor::zeros(vec![3 * h, h]),
            b_input: Tensor::zeros(vec![3 * h]),
            b_hidden: Tensor::zeros(vec![3 * h]),
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let params = BiGruParams {
            forward: zero_params(3, 2),
            backward: zero_params(3, 2),
        };
        let input = Tensor::from_vec(vec![1, 3], vec![0.5, -0.25, 1.0]);
        let (out, _) = bigru(&input, &params).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversal_swaps_halves_when_directions_share_params() {
        let mut rng = SplitMix64::new(11);
        let dir = GruParams::<f64>::new_seeded(3, 2, &mut rng);
        let params = BiGruParams {
            forward: dir.clone(),
            backward: dir,
        };
        let steps = 5;
        let input = Tensor::from_vec(
            vec![steps, 3],
            (0..steps * 3).map(|i| (i as f64 * 0.37).sin()).collect(),
        );
        let mut rev_data = vec![0.0; steps * 3];
        for t in 0..steps {
            rev_data[t * 3..(t + 1) * 3]
                .copy_from_slice(&input.data()[(steps - 1 - t) * 3..(steps - t) * 3]);
        }
        let reversed = Tensor::from_vec(vec![steps, 3], rev_data);

        let (a, _) = bigru(&input, &params).unwrap();
        let (b, _) = bigru(&reversed, &params).unwrap();
        let h = 2;
        for t in 0..steps {
            for k in 0..h {
                // forward half of the reversed run equals the backward half
                // of the original at mirrored time, and vice versa.
                assert!(
                    (b.data()[t * 2 * h + k] - a.data()[(steps - 1 - t) * 2 * h + h + k]).abs()
                        < 1e-12
                );
                assert!(
                    (b.data()[t * 2 * h + h + k] - a.data()[(steps - 1 - t) * 2 * h + k]).abs()
                        < 1e-12
                );
            }
        }
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // One timestep, one unit. All weights 0.1; input [1.0].
        let mut params = zero_params(1, 1);
        params.w_input.data_mut().fill(0.1);
        params.w_hidden.data_mut().fill(0.1);
        params.b_input.data_mut().fill(0.1);
        params.b_hidden.data_mut().fill(0.1);
        let bi = BiGruParams {
            forward: params.clone(),
            backward: params,
        };
        let input = Tensor::from_vec(vec![1, 1], vec![1.0]);
        let (out, _) = bigru(&input, &bi).unwrap();
        // gi = 0.1*1 + 0.1 = 0.2 for every gate; gh = 0.1 (h_prev = 0).
        // r = z = sigmoid(0.3); n = tanh(0.2 + r*0.1); h = (1-z)*n.
        let r = 1.0 / (1.0 + (-0.3f64).exp());
        let n = (0.2 + r * 0.1f64).tanh();
        let h = (1.0 - r) * n;
        assert!((out.data()[0] - h).abs() < 1e-12);
        assert!((out.data()[1] - h).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = SplitMix64::new(3);
        let params = BiGruParams::<f64>::new_seeded(4, 2, &mut rng);
        let input = Tensor::zeros(vec![5, 3]);
        assert!(bigru(&input, &params).is_err());
        let empty = Tensor::zeros(vec![0, 4]);
        assert!(bigru(&empty, &params).is_err());
    }
}
