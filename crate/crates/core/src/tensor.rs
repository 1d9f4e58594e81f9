//! Dense row-major tensors.
//!
//! Activations use a channel-major layout: `[channels, batch, frames]` for
//! sequences and `[channels, height, batch, frames]` for 2D maps. With this
//! layout a batched convolution is a single matrix product and flattening a
//! 2D map to a sequence (`channels·height` rows) is free.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// `[channels, batch, frames]` of a sequence tensor.
    pub fn dims3(&self) -> (usize, usize, usize) {
        assert_eq!(
            self.rank(),
            3,
            "expected a [C, B, T] tensor, got {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1], self.shape[2])
    }

    /// `[channels, height, batch, frames]` of a 2D map.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(
            self.rank(),
            4,
            "expected a [C, H, B, T] tensor, got {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} to {:?}", self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, value: F) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&mut self, s: F) {
        self.data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<G: Real>(&self, f: impl Fn(F) -> G) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy frames `[start, start+len)` of every (channel, batch) row of a
    /// `[C, B, T]` tensor.
    pub fn slice_frames(&self, start: usize, len: usize) -> Self {
        let (c, b, t) = self.dims3();
        assert!(start + len <= t, "frame slice out of range");
        let mut out = Vec::with_capacity(c * b * len);
        for row in self.data.chunks_exact(t) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Self {
            shape: vec![c, b, len],
            data: out,
        }
    }

    /// Extract one batch item of a `[C, B, T]` tensor as `[C, 1, T]`.
    pub fn batch_item(&self, index: usize) -> Self {
        let (c, b, t) = self.dims3();
        assert!(index < b);
        let mut out = Vec::with_capacity(c * t);
        for ch in 0..c {
            let base = (ch * b + index) * t;
            out.extend_from_slice(&self.data[base..base + t]);
        }
        Self {
            shape: vec![c, 1, t],
            data: out,
        }
    }

    /// Stack `[C, 1, T]` items (or `C×T` matrices) along the batch axis.
    pub fn stack_batch(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| shape_err!("cannot stack an empty batch"))?;
        let c = first.shape[0];
        let t = *first.shape.last().unwrap_or(&0);
        for it in items {
            if it.len() != c * t || it.shape[0] != c || *it.shape.last().unwrap_or(&0) != t {
                return Err(shape_err!(
                    "batch items disagree in shape: {:?} vs {:?}",
                    first.shape,
                    it.shape
                ));
            }
        }
        let b = items.len();
        let mut data = Vec::with_capacity(c * b * t);
        for ch in 0..c {
            for it in items {
                data.extend_from_slice(&it.data[ch * t..(ch + 1) * t]);
            }
        }
        Ok(Self {
            shape: vec![c, b, t],
            data,
        })
    }
}
