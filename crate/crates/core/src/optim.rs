//! Nadam: Adam with Nesterov momentum and a warm-up momentum schedule.
//!
//! One step at `t` (counting from 1), per element:
//!
//! ```text
//! mu_t      = beta1 * (1 - 0.5 * 0.96^(t * schedule_decay))
//! mu_next   = beta1 * (1 - 0.5 * 0.96^((t + 1) * schedule_decay))
//! prod      = prod * mu_t
//! g_hat     = g / (1 - prod)
//! m         = beta1 * m + (1 - beta1) * g
//! m_hat     = m / (1 - prod * mu_next)
//! v         = beta2 * v + (1 - beta2) * g^2
//! v_hat     = v / (1 - beta2^t)
//! m_bar     = (1 - mu_t) * g_hat + mu_next * m_hat
//! theta     = theta - lr * m_bar / (sqrt(v_hat) + eps)
//! ```

use crate::error::{Error, Result};

/// How the momentum coefficient evolves with the step count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentumSchedule {
    /// `beta1 * (1 - 0.5 * 0.96^(t * schedule_decay))`.
    Warmup,
    /// Always `beta1`.
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule_decay: f64,
    pub schedule: MomentumSchedule,
    /// With `false` the update uses the bias-corrected first moment
    /// `m / (1 - prod)` directly, which together with
    /// [`MomentumSchedule::Constant`] is plain Adam.
    pub nesterov: bool,
}

impl Default for NadamConfig {
    fn default() -> Self {
        NadamConfig {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule_decay: 0.004,
            schedule: MomentumSchedule::Warmup,
            nesterov: true,
        }
    }
}

impl NadamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.schedule_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHyperparams(format!(
                "invalid Nadam settings {self:?}"
            )))
        }
    }

    /// Momentum coefficient at step `t`.
    pub fn momentum(&self, t: u64) -> f64 {
        match self.schedule {
            MomentumSchedule::Warmup => {
                self.beta1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 * self.schedule_decay))
            }
            MomentumSchedule::Constant => self.beta1,
        }
    }
}

/// Moment estimates for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct NadamState {
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub mu_product: f64,
}

impl NadamState {
    /// Zeroed state for tensors of the given lengths.
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = sizes.into_iter().map(|n| vec![0.0; n]).collect();
        NadamState {
            t: 0,
            v: m.clone(),
            m,
            mu_product: 1.0,
        }
    }

    pub fn for_tensors(tensors: &[&[f64]]) -> Self {
        Self::new(tensors.iter().map(|t| t.len()))
    }

    /// Applies one update to `params` in place.
    pub fn step(
        &mut self,
        config: &NadamConfig,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
    ) -> Result<()> {
        let shapes_match = params.len() == grads.len()
            && params.len() == self.m.len()
            && params
                .iter()
                .zip(grads)
                .zip(&self.m)
                .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
        if !shapes_match {
            return Err(Error::Shape("gradients do not mirror parameters".into()));
        }

        self.t += 1;
        let t = self.t;
        let mu_t = config.momentum(t);
        let mu_next = config.momentum(t + 1);
        self.mu_product *= mu_t;
        let prod = self.mu_product;
        let b1 = config.beta1;
        let b2 = config.beta2;
        let v_corr = 1.0 - b2.powi(t.min(i32::MAX as u64) as i32);

        for (((theta, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..theta.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let v_hat = v[i] / v_corr;
                let m_bar = if config.nesterov {
                    let g_hat = gi / (1.0 - prod);
                    let m_hat = m[i] / (1.0 - prod * mu_next);
                    (1.0 - mu_t) * g_hat + mu_next * m_hat
                } else {
                    m[i] / (1.0 - prod)
                };
                theta[i] -= config.lr * m_bar / (v_hat.sqrt() + config.eps);
            }
        }
        Ok(())
    }
}
