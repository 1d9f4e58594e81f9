use alloc::vec;
use alloc::vec::Vec;

use super::{impl_module, Mode, Param};
use crate::real::Real;
use crate::tensor::Tensor;

/// Fraction of the running statistic retained at each update.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Batch normalization over the leading (channel) axis; statistics are
/// pooled over every other axis.
#[derive(Clone, Debug)]
pub struct BatchNorm<F> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
}

impl_module!(BatchNorm { param gamma, param beta, buffer running_mean, buffer running_var });

#[derive(Clone, Debug)]
pub struct BatchNormCache<F> {
    xhat: Vec<F>,
    inv_std: Vec<F>,
    shape: Vec<usize>,
    mode: Mode,
    batch_mean: Vec<F>,
    batch_var: Vec<F>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], F::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], F::one()),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> (Tensor<F>, BatchNormCache<F>) {
        let c = self.channels();
        assert_eq!(x.shape()[0], c, "batch norm channel mismatch");
        let n = x.len() / c;
        let eps = F::lit(BN_EPS);
        let mut xhat = vec![F::zero(); x.len()];
        let mut y = vec![F::zero(); x.len()];
        let mut inv_std = vec![F::zero(); c];
        let mut batch_mean = Vec::new();
        let mut batch_var = Vec::new();
        let nf = F::lit(n as f64);
        for ch in 0..c {
            let row = &x.data()[ch * n..(ch + 1) * n];
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = row.iter().copied().sum::<F>() / nf;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
                    batch_mean.push(mean);
                    batch_var.push(var);
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.data()[ch], self.running_var.data()[ch]),
            };
            let is = F::one() / (var + eps).sqrt();
            inv_std[ch] = is;
            let (g, b) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for i in 0..n {
                let h = (row[i] - mean) * is;
                xhat[ch * n + i] = h;
                y[ch * n + i] = g * h + b;
            }
        }
        let cache = BatchNormCache {
            xhat,
            inv_std,
            shape: x.shape().to_vec(),
            mode,
            batch_mean,
            batch_var,
        };
        (
            Tensor::from_vec(x.shape(), y).expect("shape matches"),
            cache,
        )
    }

    /// Fold the batch statistics of a training-mode forward pass into the
    /// running statistics. No-op for evaluation-mode caches.
    pub fn absorb(&mut self, cache: &BatchNormCache<F>) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = F::lit(BN_MOMENTUM);
        let n = cache.xhat.len() / self.channels();
        let unbias = if n > 1 {
            F::lit(n as f64 / (n as f64 - 1.0))
        } else {
            F::one()
        };
        let rm = self.running_mean.data_mut();
        for (r, &bm) in rm.iter_mut().zip(&cache.batch_mean) {
            *r = m * *r + (F::one() - m) * bm;
        }
        let rv = self.running_var.data_mut();
        for (r, &bv) in rv.iter_mut().zip(&cache.batch_var) {
            *r = m * *r + (F::one() - m) * bv * unbias;
        }
    }

    pub fn backward(
        &mut self,
        cache: &BatchNormCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        assert_eq!(dy.shape(), &cache.shape[..], "batch norm backward shape");
        let c = self.channels();
        let n = dy.len() / c;
        let nf = F::lit(n as f64);
        let mut dx = vec![F::zero(); dy.len()];
        for ch in 0..c {
            let g = &dy.data()[ch * n..(ch + 1) * n];
            let xh = &cache.xhat[ch * n..(ch + 1) * n];
            let sum_g: F = g.iter().copied().sum();
            let sum_gx: F = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            if param_grads {
                let gg = &mut self.gamma.grad.data_mut()[ch];
                *gg = *gg + sum_gx;
                let gb = &mut self.beta.grad.data_mut()[ch];
                *gb = *gb + sum_g;
            }
            let scale = self.gamma.value.data()[ch] * cache.inv_std[ch];
            let out = &mut dx[ch * n..(ch + 1) * n];
            match cache.mode {
                Mode::Train => {
                    for i in 0..n {
                        out[i] = scale * (g[i] - sum_g / nf - xh[i] * sum_gx / nf);
                    }
                }
                Mode::Eval => {
                    for i in 0..n {
                        out[i] = scale * g[i];
                    }
                }
            }
        }
        Tensor::from_vec(&cache.shape, dx).expect("shape matches")
    }
}
