//! Scalar loss terms. All reductions are element means accumulated in `f64`.

use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Mean absolute difference; the L1 norm used by every loss term.
pub fn l1_mean<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(shape_err!(
            "loss operands differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    if a.is_empty() {
        return Err(shape_err!("loss over an empty tensor"));
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.f64() - y.f64()).abs())
        .sum();
    Ok(s / a.len() as f64)
}

/// Gradient of `scale · l1_mean(pred, target)` with respect to `pred`.
pub fn l1_mean_grad<F: Real>(pred: &Tensor<F>, target: &Tensor<F>, scale: f64) -> Tensor<F> {
    let k = F::lit(scale / pred.len() as f64);
    let mut g = Tensor::zeros(pred.shape());
    for ((o, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        *o = if p > t {
            k
        } else if p < t {
            -k
        } else {
            F::zero()
        };
    }
    g
}

/// Reconstruction error `L(M) = 1/(W·T) Σ |D(M) - M|` of the autoencoder
/// discriminator, averaged over the batch.
pub fn recon_loss<F: Real>(m: &Tensor<F>, d_out: &Tensor<F>) -> Result<f64> {
    l1_mean(d_out, m)
}

/// `l_D = L(X) - τ·L(G(Z))`.
pub fn discriminator_loss(l_x: f64, l_gz: f64, tau: f64) -> f64 {
    l_x - tau * l_gz
}

/// `l_G = L(G(Z))`.
pub fn generator_loss(l_gz: f64) -> f64 {
    l_gz
}

/// `l_C = |E(G(Z)) - Z|₁ + |G(E(X)) - X|₁` from its two element means.
pub fn cycle_loss(noise_term: f64, feature_term: f64) -> f64 {
    noise_term + feature_term
}

/// `l'_G = l_G + λ·l_C`.
pub fn total_generator_loss(l_g: f64, l_c: f64, lambda: f64) -> f64 {
    l_g + lambda * l_c
}
