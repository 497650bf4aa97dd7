//! Adam with bias correction.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::params::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        AdamState {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn check(&self, params: &ParameterSet, grads: &ParameterSet) -> Result<()> {
        for n in [grads.len(), self.m.len(), self.v.len()] {
            if n != params.len() {
                return Err(Error::DimensionMismatch {
                    expected: params.len(),
                    actual: n,
                });
            }
        }
        Ok(())
    }

    /// Updates every parameter.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        let all = 0..params.len();
        self.step_ranges(params, grads, std::slice::from_ref(&all))
    }

    /// Updates only the parameters (and moments) inside `ranges`; the step
    /// counter advances once.
    pub fn step_ranges(
        &mut self,
        params: &mut ParameterSet,
        grads: &ParameterSet,
        ranges: &[Range<usize>],
    ) -> Result<()> {
        self.check(params, grads)?;
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        let p = params.flatten_mut();
        let g = grads.flatten();
        for r in ranges {
            for i in r.clone() {
                self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
                self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = self.m[i] / c1;
                let v_hat = self.v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
