use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::Param;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are keyed by parameter name and
/// created lazily on the first step.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub config: AdamConfig,
    step: u64,
    names: Vec<String>,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            names: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<(String, &mut Param<F>)>) {
        if self.names.is_empty() {
            for (name, p) in &params {
                self.names.push(name.clone());
                self.m.push(Tensor::zeros(p.value.shape()));
                self.v.push(Tensor::zeros(p.value.shape()));
            }
        }
        assert_eq!(
            self.names.len(),
            params.len(),
            "optimizer bound to a different parameter set"
        );
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, t as f64);
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let (one_b1, one_b2) = (F::lit(1.0 - c.beta1), F::lit(1.0 - c.beta2));
        let step_size = F::lit(c.lr / bc1);
        let inv_bc2 = F::lit(1.0 / bc2);
        let eps = F::lit(c.eps);
        for (i, (name, p)) in params.into_iter().enumerate() {
            assert_eq!(&self.names[i], &name, "parameter order changed");
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                *w = *w - step_size * m[j] / ((v[j] * inv_bc2).sqrt() + eps);
            }
        }
    }

    /// Named first and second moments, for checkpointing.
    pub fn moments(&self) -> Vec<(String, &Tensor<F>, &Tensor<F>)> {
        self.names
            .iter()
            .zip(&self.m)
            .zip(&self.v)
            .map(|((n, m), v)| (n.clone(), m, v))
            .collect()
    }

    pub fn restore(
        &mut self,
        step: u64,
        moments: Vec<(String, Tensor<F>, Tensor<F>)>,
    ) -> Result<()> {
        if step > 0 && moments.is_empty() {
            return Err(invalid!("optimizer at step {step} has no moments"));
        }
        self.step = step;
        self.names.clear();
        self.m.clear();
        self.v.clear();
        for (n, m, v) in moments {
            self.names.push(n);
            self.m.push(m);
            self.v.push(v);
        }
        Ok(())
    }
}
