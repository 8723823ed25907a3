//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: one pair of moment tensors per parameter tensor, in the
/// order the parameters are presented to [`Adam::step`]. That order must be
/// stable across steps.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step_count: u64,
    moments: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Self {
        let moments = params
            .iter()
            .map(|p| (p.zeros_like(), p.zeros_like()))
            .collect();
        Adam {
            config,
            step_count: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != self.moments.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, state holds {}",
                params.len(),
                grads.len(),
                self.moments.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let lr = T::from_f64(self.config.lr);
        let eps = T::from_f64(self.config.epsilon);
        let bc1 = T::from_f64(1.0 - self.config.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - self.config.beta2.powi(t));
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.moments.iter_mut())
        {
            if param.shape() != grad.shape() || param.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "adam: param {:?} vs grad {:?} vs state {:?}",
                    param.shape(),
                    grad.shape(),
                    m.shape()
                )));
            }
            let pd = param.data_mut();
            let gd = grad.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = gd[i];
                md[i] = b1 * md[i] + (T::ONE - b1) * g;
                vd[i] = b2 * vd[i] + (T::ONE - b2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let p = Tensor::<f64>::from_vec(vec![3], vec![1.0, -2.0, 0.5]);
        let mut param = p.clone();
        let grad = Tensor::zeros(vec![3]);
        let mut adam = Adam::new(AdamConfig::default(), &[&param]);
        adam.step(&mut [&mut param], &[&grad]).unwrap();
        assert_eq!(param, p);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // m_hat = g, v_hat = g^2, so the first update is lr * g / (|g| + eps).
        let mut param = Tensor::<f64>::from_vec(vec![1], vec![0.0]);
        let grad = Tensor::from_vec(vec![1], vec![2.0]);
        let mut adam = Adam::new(AdamConfig::default(), &[&param]);
        adam.step(&mut [&mut param], &[&grad]).unwrap();
        assert!((param.data()[0] + 1e-4).abs() < 1e-10, "{}", param.data()[0]);
    }

    #[test]
    fn deterministic_across_identical_runs() {
        let run = || {
            let mut param = Tensor::<f32>::from_vec(vec![2], vec![0.3, -0.7]);
            let grad = Tensor::from_vec(vec![2], vec![0.1, -0.2]);
            let mut adam = Adam::new(AdamConfig::default(), &[&param]);
            for _ in 0..10 {
                adam.step(&mut [&mut param], &[&grad]).unwrap();
            }
            param
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut param = Tensor::<f64>::zeros(vec![2]);
        let grad = Tensor::zeros(vec![3]);
        let mut adam = Adam::new(AdamConfig::default(), &[&param]);
        assert!(adam.step(&mut [&mut param], &[&grad]).is_err());
    }
}
