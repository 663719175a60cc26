use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient as `λ θ`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.0,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

/// Bias-corrected Adam with per-parameter moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    last_m_hat: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Adam {
            cfg,
            m: zeros.clone(),
            v: zeros.clone(),
            t: 0,
            last_m_hat: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Bias-corrected first moments of the most recent step.
    pub fn last_first_moment(&self) -> &[Tensor] {
        &self.last_m_hat
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::extent(
                "adam_step",
                format!("{} gradients for {} parameters", grads.len(), self.m.len()),
            ));
        }
        for (id, g) in store.ids().zip(grads) {
            if g.shape() != store.value(id).shape() {
                return Err(Error::shape("adam_step", store.value(id).shape(), g.shape()));
            }
        }
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let theta = store.value_mut(id).data_mut();
            let (m, v, mh) = (self.m[i].data_mut(), self.v[i].data_mut(), self.last_m_hat[i].data_mut());
            for k in 0..theta.len() {
                let g = grads[i].data()[k] + weight_decay * theta[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                mh[k] = m_hat;
                theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
