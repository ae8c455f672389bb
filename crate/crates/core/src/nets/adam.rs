use super::{MlpGradients, MlpModel, NetError};
use crate::adcore::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one model, mirroring its parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = model
            .params()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[Tensor] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Tensor] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    model: &mut MlpModel,
    grads: &MlpGradients,
    state: &mut AdamState,
) -> Result<(), NetError> {
    for (index, (p, g)) in model.params().zip(grads.params()).enumerate() {
        if p.shape() != g.shape() {
            return Err(NetError::GradientShape {
                index,
                expected: p.shape(),
                got: g.shape(),
            });
        }
    }
    if grads.params().count() != state.first_moment.len() {
        return Err(NetError::GradientShape {
            index: grads.params().count(),
            expected: (state.first_moment.len(), 0),
            got: (grads.params().count(), 0),
        });
    }

    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    let moments = state.first_moment.iter_mut().zip(state.second_moment.iter_mut());
    for ((p, g), (m, v)) in model.params_mut().zip(grads.params()).zip(moments) {
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((w, &gi), (mi, vi)) in iter {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
