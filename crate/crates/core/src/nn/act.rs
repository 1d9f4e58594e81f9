use crate::real::Real;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu<F: Real>(mut x: Tensor<F>) -> Tensor<F> {
    let slope = F::lit(LEAKY_SLOPE);
    for v in x.data_mut() {
        if *v < F::zero() {
            *v = *v * slope;
        }
    }
    x
}

/// Backward through a leaky ReLU given its output `y`. The sign of the
/// output equals the sign of the input because the slope is positive.
pub fn leaky_relu_backward<F: Real>(y: &Tensor<F>, mut dy: Tensor<F>) -> Tensor<F> {
    let slope = F::lit(LEAKY_SLOPE);
    for (g, &o) in dy.data_mut().iter_mut().zip(y.data()) {
        if o < F::zero() {
            *g = *g * slope;
        }
    }
    dy
}
