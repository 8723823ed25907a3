//! Masked binary cross-entropy and focal loss.
//!
//! Both losses average over cells where `mask` is 1 and clamp the target
//! probability `p_t` to `[1e-7, 1 - 1e-7]` before the log. The focal loss is
//! `-alpha * (1 - p_t)^gamma * ln(p_t)` with `p_t = p` for positive targets
//! and `1 - p` for negative ones; with `alpha = 1, gamma = 0` it reduces to
//! cross-entropy exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Clamp bound keeping `ln` finite.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Focal,
}

/// Which loss to train with, and the focal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::Bce,
            alpha: 0.2,
            gamma: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0,1]", self.alpha)));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma {} negative", self.gamma)));
        }
        Ok(())
    }

    /// Loss value and gradient w.r.t. predictions under this config.
    pub fn evaluate<T: Scalar>(
        &self,
        pred: &Tensor<T>,
        target: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<(T, Tensor<T>)> {
        match self.kind {
            LossKind::Bce => bce_loss(pred, target, mask),
            LossKind::Focal => focal_loss(pred, target, mask, self.alpha, self.gamma),
        }
    }
}

fn check_shapes<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &Tensor<T>,
) -> Result<usize> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "loss shapes differ: pred {:?}, target {:?}, mask {:?}",
            pred.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    let count = mask.data().iter().filter(|&&m| m != T::ZERO).count();
    if count == 0 {
        return Err(Error::Invalid("loss mask is empty".into()));
    }
    Ok(count)
}

/// Mean masked binary cross-entropy and its gradient w.r.t. `pred`.
pub fn bce_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    let count = check_shapes(pred, target, mask)?;
    let inv = T::from_f64(1.0 / count as f64);
    let eps = T::from_f64(LOSS_EPS);
    let hi = T::ONE - eps;
    let mut grad = pred.zeros_like();
    let g = grad.data_mut();
    let mut total = T::ZERO;
    for i in 0..pred.len() {
        if mask.data()[i] == T::ZERO {
            continue;
        }
        let y = target.data()[i];
        let p = pred.data()[i].maximum(eps).minimum(hi);
        total += -(y * p.ln() + (T::ONE - y) * (T::ONE - p).ln());
        // Zero gradient where the clamp binds, matching the computed value.
        let raw = pred.data()[i];
        if raw > eps && raw < hi {
            g[i] = (-y / p + (T::ONE - y) / (T::ONE - p)) * inv;
        }
    }
    Ok((total * inv, grad))
}

/// Mean masked focal loss `-alpha (1 - p_t)^gamma ln(p_t)` and its gradient.
pub fn focal_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &Tensor<T>,
    alpha: f64,
    gamma: f64,
) -> Result<(T, Tensor<T>)> {
    let count = check_shapes(pred, target, mask)?;
    let inv = T::from_f64(1.0 / count as f64);
    let a = T::from_f64(alpha);
    let gam = T::from_f64(gamma);
    let eps = T::from_f64(LOSS_EPS);
    let hi = T::ONE - eps;
    let mut grad = pred.zeros_like();
    let g = grad.data_mut();
    let mut total = T::ZERO;
    for i in 0..pred.len() {
        if mask.data()[i] == T::ZERO {
            continue;
        }
        let y = target.data()[i];
        let positive = y != T::ZERO;
        let pt_raw = if positive {
            pred.data()[i]
        } else {
            T::ONE - pred.data()[i]
        };
        let pt = pt_raw.maximum(eps).minimum(hi);
        let one_minus = T::ONE - pt;
        let modulator = if gamma == 0.0 {
            T::ONE
        } else {
            one_minus.powf(gam)
        };
        total += -a * modulator * pt.ln();
        if pt_raw > eps && pt_raw < hi {
            // d/d pt of -a (1-pt)^gamma ln(pt)
            let focus_term = if gamma == 0.0 {
                T::ZERO
            } else {
                -gam * one_minus.powf(gam - T::ONE) * pt.ln()
            };
            let d_pt = -a * (focus_term + modulator / pt);
            g[i] = if positive { d_pt * inv } else { -d_pt * inv };
        }
    }
    Ok((total * inv, grad))
}
