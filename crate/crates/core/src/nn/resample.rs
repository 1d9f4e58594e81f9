use alloc::vec::Vec;

use crate::real::Real;
use crate::tensor::Tensor;

/// Nearest-neighbour upsampling by 2 along time: `out[.., 2t] = out[.., 2t+1] = in[.., t]`.
pub fn upsample2x<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (c, b, t) = x.dims3();
    let mut out = Vec::with_capacity(x.len() * 2);
    for &v in x.data() {
        out.push(v);
        out.push(v);
    }
    Tensor::from_vec(&[c, b, 2 * t], out).expect("shape matches")
}

pub fn upsample2x_backward<F: Real>(dy: &Tensor<F>) -> Tensor<F> {
    let (c, b, t2) = dy.dims3();
    let data = dy.data().chunks_exact(2).map(|p| p[0] + p[1]).collect();
    Tensor::from_vec(&[c, b, t2 / 2], data).expect("shape matches")
}

/// Average pooling by 2 along time; the frame count must be even.
pub fn avg_pool2<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let (c, b, t) = x.dims3();
    assert!(t % 2 == 0, "avg_pool2 needs an even frame count");
    let half = F::lit(0.5);
    let data = x
        .data()
        .chunks_exact(2)
        .map(|p| (p[0] + p[1]) * half)
        .collect();
    Tensor::from_vec(&[c, b, t / 2], data).expect("shape matches")
}

pub fn avg_pool2_backward<F: Real>(dy: &Tensor<F>) -> Tensor<F> {
    let (c, b, t) = dy.dims3();
    let half = F::lit(0.5);
    let mut out = Vec::with_capacity(dy.len() * 2);
    for &g in dy.data() {
        out.push(g * half);
        out.push(g * half);
    }
    Tensor::from_vec(&[c, b, 2 * t], out).expect("shape matches")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn upsample_duplicates_columns() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(upsample2x(&x).data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn pool_is_adjoint_of_half_upsample() {
        let x = Tensor::<f64>::from_vec(&[2, 1, 4], vec![1., 3., 5., 7., 2., 2., 0., 4.]).unwrap();
        assert_eq!(avg_pool2(&x).data(), &[2., 6., 2., 2.]);
        let g = avg_pool2_backward(&avg_pool2(&x));
        assert_eq!(g.data(), &[1., 1., 3., 3., 1., 1., 1., 1.]);
        assert_eq!(upsample2x_backward(&x).data(), &[4., 12., 4., 4.]);
    }
}
