//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment accumulators plus the step count.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    hyper: AdamConfig,
    moments: Vec<(Tensor, Tensor)>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(hyper: AdamConfig, params: &[&Tensor]) -> Self {
        let moments = params
            .iter()
            .map(|p| {
                (
                    Tensor::zeros(p.shape().to_vec()),
                    Tensor::zeros(p.shape().to_vec()),
                )
            })
            .collect();
        OptimizerState {
            hyper,
            moments,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn hyper(&self) -> &AdamConfig {
        &self.hyper
    }

    /// One update: `p ← p − lr·m̂/(√v̂+ε) − lr·λ·p`, decay decoupled from
    /// the moment estimates.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
    ) -> Result<(), TensorError> {
        if params.len() != self.moments.len() || grads.len() != self.moments.len() {
            return Err(TensorError::Optimizer {
                msg: format!(
                    "expected {} parameter/gradient pairs, got {}/{}",
                    self.moments.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for ((p, g), (m, v)) in params.iter().zip(grads).zip(&self.moments) {
            if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "optimizer_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as f64;
        let h = self.hyper;
        let bias1 = 1.0 - h.beta1.powf(t);
        let bias2 = 1.0 - h.beta2.powf(t);

        for ((param, grad), (m, v)) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = h.beta1 * md[i] + (1.0 - h.beta1) * g;
                vd[i] = h.beta2 * vd[i] + (1.0 - h.beta2) * g * g;
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                pd[i] -=
                    h.learning_rate * (m_hat / (v_hat.sqrt() + h.epsilon) + h.weight_decay * pd[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            weight_decay: wd,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let mut state = OptimizerState::new(cfg(0.1, 0.0), &[&p]);
        let g = Tensor::zeros(vec![3]);
        state.step(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // p=1, g=1, lr=0.1, no decay: bias-corrected m̂ = v̂ = 1, so p' ≈ 0.9.
        let mut p = Tensor::scalar(1.0);
        let mut state = OptimizerState::new(cfg(0.1, 0.0), &[&p]);
        state.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        assert!((p.item() - 0.9).abs() < 1e-8, "got {}", p.item());
    }

    #[test]
    fn constant_positive_gradient_strictly_decreases_param() {
        let mut p = Tensor::scalar(1.0);
        let mut state = OptimizerState::new(cfg(0.01, 0.0), &[&p]);
        let mut prev = p.item();
        for _ in 0..50 {
            state.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
            assert!(p.item() < prev);
            prev = p.item();
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut state = OptimizerState::new(cfg(0.1, 0.0), &[&p]);
        let bad = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!(state.step(&mut [&mut p], &[bad]).is_err());
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient_signal() {
        let mut p = Tensor::scalar(2.0);
        let mut state = OptimizerState::new(cfg(0.1, 0.5), &[&p]);
        state.step(&mut [&mut p], &[Tensor::scalar(0.0)]).unwrap();
        // p − lr·wd·p = 2 − 0.1·0.5·2 = 1.9
        assert!((p.item() - 1.9).abs() < 1e-12);
    }
}
