use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{impl_module, Padding, Param};
use crate::error::{invalid, shape_err, Result};
use crate::real::{gemm, Real, Trans};
use crate::tensor::Tensor;

/// `dst[i] = src[i + shift]`, with out-of-range reads zero or wrapped.
fn shift_copy<F: Real>(src: &[F], dst: &mut [F], shift: isize, padding: Padding) {
    let t = src.len() as isize;
    match padding {
        Padding::Zero => {
            let lo = (-shift).clamp(0, t);
            let hi = (t - shift).clamp(0, t);
            if lo < hi {
                dst[lo as usize..hi as usize]
                    .copy_from_slice(&src[(lo + shift) as usize..(hi + shift) as usize]);
            }
        }
        Padding::Circular => {
            for (i, d) in dst.iter_mut().enumerate() {
                *d = src[(i as isize + shift).rem_euclid(t) as usize];
            }
        }
    }
}

/// Adjoint of [`shift_copy`]: `dx[i + shift] += g[i]`.
fn shift_add<F: Real>(g: &[F], dx: &mut [F], shift: isize, padding: Padding) {
    let t = g.len() as isize;
    match padding {
        Padding::Zero => {
            let lo = (-shift).clamp(0, t);
            let hi = (t - shift).clamp(0, t);
            for i in lo..hi {
                let d = &mut dx[(i + shift) as usize];
                *d = *d + g[i as usize];
            }
        }
        Padding::Circular => {
            for (i, &v) in g.iter().enumerate() {
                let d = &mut dx[(i as isize + shift).rem_euclid(t) as usize];
                *d = *d + v;
            }
        }
    }
}

fn add_bias_rows<F: Real>(y: &mut [F], bias: &[F], row_len: usize) {
    for (row, &b) in y.chunks_exact_mut(row_len).zip(bias) {
        row.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn accumulate_bias_grad<F: Real>(grad: &mut [F], dy: &[F], row_len: usize) {
    for (g, row) in grad.iter_mut().zip(dy.chunks_exact(row_len)) {
        let s: F = row.iter().copied().sum();
        *g = *g + s;
    }
}

/// Grouped, dilated 1D convolution with "same" padding over `[C, B, T]`.
#[derive(Clone, Debug)]
pub struct Conv1d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    dilation: usize,
    groups: usize,
    pub padding: Padding,
}

impl_module!(Conv1d { param weight, param bias });

#[derive(Clone, Debug)]
pub struct Conv1dCache<F> {
    cols: Vec<F>,
    taps: Vec<usize>,
    batch: usize,
    frames: usize,
}

impl<F: Real> Conv1d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        groups: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if groups == 0
            || !in_channels.is_multiple_of(groups)
            || !out_channels.is_multiple_of(groups)
        {
            return Err(invalid!(
                "channels {in_channels}->{out_channels} not divisible into {groups} groups"
            ));
        }
        if kernel.is_multiple_of(2) || dilation == 0 {
            return Err(invalid!("kernel must be odd and dilation positive"));
        }
        let fan_in = in_channels / groups * kernel;
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        Ok(Self {
            weight: Param::uniform(&[out_channels, in_channels / groups, kernel], bound, rng),
            bias: Param::uniform(&[out_channels], bound, rng),
            in_channels,
            out_channels,
            kernel,
            dilation,
            groups,
            padding: Padding::Zero,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn shift(&self, tap: usize) -> isize {
        (tap as isize - (self.kernel as isize - 1) / 2) * self.dilation as isize
    }

    /// Taps that can read inside the sequence. With zero padding a tap
    /// shifted by `T` or more frames only sees zeros and is skipped.
    fn active_taps(&self, t: usize) -> Vec<usize> {
        (0..self.kernel)
            .filter(|&j| self.padding == Padding::Circular || self.shift(j).unsigned_abs() < t)
            .collect()
    }

    /// Weight restricted to `taps`, as `[out, in/groups · taps]`.
    fn tap_weights(&self, taps: &[usize]) -> Vec<F> {
        let k = self.kernel;
        let w = self.weight.value.data();
        let mut out = Vec::with_capacity(w.len() / k * taps.len());
        for row in w.chunks_exact(k) {
            out.extend(taps.iter().map(|&j| row[j]));
        }
        out
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Conv1dCache<F>)> {
        if x.rank() != 3 || x.shape()[0] != self.in_channels {
            return Err(shape_err!(
                "conv1d expects [{}, B, T], got {:?}",
                self.in_channels,
                x.shape()
            ));
        }
        let (c_in, b, t) = x.dims3();
        let taps = self.active_taps(t);
        let ka = taps.len();
        let bt = b * t;
        let mut cols = vec![F::zero(); c_in * ka * bt];
        for c in 0..c_in {
            for (a, &j) in taps.iter().enumerate() {
                let shift = self.shift(j);
                let row = &mut cols[(c * ka + a) * bt..(c * ka + a + 1) * bt];
                for bi in 0..b {
                    let src = &x.data()[(c * b + bi) * t..(c * b + bi + 1) * t];
                    shift_copy(src, &mut row[bi * t..(bi + 1) * t], shift, self.padding);
                }
            }
        }
        let g = self.groups;
        let (cin_g, cout_g) = (c_in / g, self.out_channels / g);
        let red = cin_g * ka;
        let mut y = vec![F::zero(); self.out_channels * bt];
        let gathered;
        let w = if ka == self.kernel {
            self.weight.value.data()
        } else {
            gathered = self.tap_weights(&taps);
            &gathered
        };
        for gi in 0..g {
            gemm(
                cout_g,
                bt,
                red,
                F::one(),
                &w[gi * cout_g * red..(gi + 1) * cout_g * red],
                Trans::No,
                &cols[gi * red * bt..(gi + 1) * red * bt],
                Trans::No,
                F::zero(),
                &mut y[gi * cout_g * bt..(gi + 1) * cout_g * bt],
            );
        }
        add_bias_rows(&mut y, self.bias.value.data(), bt);
        let y = Tensor::from_vec(&[self.out_channels, b, t], y)?;
        Ok((
            y,
            Conv1dCache {
                cols,
                taps,
                batch: b,
                frames: t,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &Conv1dCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let (b, t) = (cache.batch, cache.frames);
        assert_eq!(
            dy.shape(),
            &[self.out_channels, b, t],
            "conv1d backward shape"
        );
        let bt = b * t;
        let k = self.kernel;
        let taps = &cache.taps;
        let ka = taps.len();
        let g = self.groups;
        let (cin_g, cout_g) = (self.in_channels / g, self.out_channels / g);
        let red = cin_g * ka;
        let dyd = dy.data();
        if param_grads {
            accumulate_bias_grad(self.bias.grad.data_mut(), dyd, bt);
            let full = ka == k;
            let mut dw_taps = if full {
                Vec::new()
            } else {
                vec![F::zero(); self.out_channels * red]
            };
            let dw = if full {
                self.weight.grad.data_mut()
            } else {
                &mut dw_taps[..]
            };
            for gi in 0..g {
                gemm(
                    cout_g,
                    red,
                    bt,
                    F::one(),
                    &dyd[gi * cout_g * bt..(gi + 1) * cout_g * bt],
                    Trans::No,
                    &cache.cols[gi * red * bt..(gi + 1) * red * bt],
                    Trans::Yes,
                    F::one(),
                    &mut dw[gi * cout_g * red..(gi + 1) * cout_g * red],
                );
            }
            if !full {
                for (row, src) in self
                    .weight
                    .grad
                    .data_mut()
                    .chunks_exact_mut(k)
                    .zip(dw_taps.chunks_exact(ka))
                {
                    for (&j, &v) in taps.iter().zip(src) {
                        row[j] = row[j] + v;
                    }
                }
            }
        }
        let mut dcols = vec![F::zero(); self.in_channels * ka * bt];
        let gathered;
        let w = if ka == k {
            self.weight.value.data()
        } else {
            gathered = self.tap_weights(taps);
            &gathered
        };
        for gi in 0..g {
            gemm(
                red,
                bt,
                cout_g,
                F::one(),
                &w[gi * cout_g * red..(gi + 1) * cout_g * red],
                Trans::Yes,
                &dyd[gi * cout_g * bt..(gi + 1) * cout_g * bt],
                Trans::No,
                F::zero(),
                &mut dcols[gi * red * bt..(gi + 1) * red * bt],
            );
        }
        let mut dx = vec![F::zero(); self.in_channels * bt];
        for c in 0..self.in_channels {
            for (a, &j) in taps.iter().enumerate() {
                let shift = self.shift(j);
                let row = &dcols[(c * ka + a) * bt..(c * ka + a + 1) * bt];
                for bi in 0..b {
                    shift_add(
                        &row[bi * t..(bi + 1) * t],
                        &mut dx[(c * b + bi) * t..(c * b + bi + 1) * t],
                        shift,
                        self.padding,
                    );
                }
            }
        }
        Tensor::from_vec(&[self.in_channels, b, t], dx).expect("shape matches")
    }
}

/// 2D convolution over `[C, H, B, T]` with stride along `H` (frequency)
/// and dilation along `T` (time). Frequency is zero-padded so that
/// `H_out = ceil(H / stride)` for kernel 3.
#[derive(Clone, Debug)]
pub struct Conv2d<F> {
    pub weight: Param<F>,
    pub bias: Param<F>,
    in_channels: usize,
    out_channels: usize,
    kernel: (usize, usize),
    stride_h: usize,
    dilation: (usize, usize),
    pub padding: Padding,
}

impl_module!(Conv2d { param weight, param bias });

#[derive(Clone, Debug)]
pub struct Conv2dCache<F> {
    cols: Vec<F>,
    in_height: usize,
    out_height: usize,
    batch: usize,
    frames: usize,
}

impl<F: Real> Conv2d<F> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride_h: usize,
        dilation: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if kernel.0.is_multiple_of(2)
            || kernel.1.is_multiple_of(2)
            || stride_h == 0
            || dilation.0 == 0
            || dilation.1 == 0
        {
            return Err(invalid!(
                "conv2d needs odd kernels and positive stride/dilation"
            ));
        }
        let fan_in = in_channels * kernel.0 * kernel.1;
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        Ok(Self {
            weight: Param::uniform(&[out_channels, in_channels, kernel.0, kernel.1], bound, rng),
            bias: Param::uniform(&[out_channels], bound, rng),
            in_channels,
            out_channels,
            kernel,
            stride_h,
            dilation,
            padding: Padding::Zero,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn out_height(&self, h: usize) -> usize {
        let pad = self.dilation.0 * (self.kernel.0 - 1) / 2;
        (h + 2 * pad - self.dilation.0 * (self.kernel.0 - 1) - 1) / self.stride_h + 1
    }

    fn source_row(&self, ho: usize, i: usize, h: usize) -> Option<usize> {
        let pad = (self.dilation.0 * (self.kernel.0 - 1) / 2) as isize;
        let r = (ho * self.stride_h + i * self.dilation.0) as isize - pad;
        (r >= 0 && (r as usize) < h).then_some(r as usize)
    }

    fn time_shift(&self, j: usize) -> isize {
        (j as isize - (self.kernel.1 as isize - 1) / 2) * self.dilation.1 as isize
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, Conv2dCache<F>)> {
        if x.rank() != 4 || x.shape()[0] != self.in_channels {
            return Err(shape_err!(
                "conv2d expects [{}, H, B, T], got {:?}",
                self.in_channels,
                x.shape()
            ));
        }
        let (c_in, h, b, t) = x.dims4();
        let ho_n = self.out_height(h);
        let (kh, kw) = self.kernel;
        let bt = b * t;
        let ncols = ho_n * bt;
        let red = c_in * kh * kw;
        let mut cols = vec![F::zero(); red * ncols];
        for c in 0..c_in {
            for i in 0..kh {
                for j in 0..kw {
                    let r = (c * kh + i) * kw + j;
                    let shift = self.time_shift(j);
                    for ho in 0..ho_n {
                        let Some(hs) = self.source_row(ho, i, h) else {
                            continue;
                        };
                        for bi in 0..b {
                            let src = &x.data()[((c * h + hs) * b + bi) * t..][..t];
                            let dst = &mut cols[r * ncols + (ho * b + bi) * t..][..t];
                            shift_copy(src, dst, shift, self.padding);
                        }
                    }
                }
            }
        }
        let mut y = vec![F::zero(); self.out_channels * ncols];
        gemm(
            self.out_channels,
            ncols,
            red,
            F::one(),
            self.weight.value.data(),
            Trans::No,
            &cols,
            Trans::No,
            F::zero(),
            &mut y,
        );
        add_bias_rows(&mut y, self.bias.value.data(), ncols);
        let y = Tensor::from_vec(&[self.out_channels, ho_n, b, t], y)?;
        Ok((
            y,
            Conv2dCache {
                cols,
                in_height: h,
                out_height: ho_n,
                batch: b,
                frames: t,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &Conv2dCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let (h, ho_n, b, t) = (cache.in_height, cache.out_height, cache.batch, cache.frames);
        assert_eq!(
            dy.shape(),
            &[self.out_channels, ho_n, b, t],
            "conv2d backward shape"
        );
        let (kh, kw) = self.kernel;
        let ncols = ho_n * b * t;
        let red = self.in_channels * kh * kw;
        if param_grads {
            accumulate_bias_grad(self.bias.grad.data_mut(), dy.data(), ncols);
            gemm(
                self.out_channels,
                red,
                ncols,
                F::one(),
                dy.data(),
                Trans::No,
                &cache.cols,
                Trans::Yes,
                F::one(),
                self.weight.grad.data_mut(),
            );
        }
        let mut dcols = vec![F::zero(); red * ncols];
        gemm(
            red,
            ncols,
            self.out_channels,
            F::one(),
            self.weight.value.data(),
            Trans::Yes,
            dy.data(),
            Trans::No,
            F::zero(),
            &mut dcols,
        );
        let mut dx = vec![F::zero(); self.in_channels * h * b * t];
        for c in 0..self.in_channels {
            for i in 0..kh {
                for j in 0..kw {
                    let r = (c * kh + i) * kw + j;
                    let shift = self.time_shift(j);
                    for ho in 0..ho_n {
                        let Some(hs) = self.source_row(ho, i, h) else {
                            continue;
                        };
                        for bi in 0..b {
                            let g = &dcols[r * ncols + (ho * b + bi) * t..][..t];
                            let d = &mut dx[((c * h + hs) * b + bi) * t..][..t];
                            shift_add(g, d, shift, self.padding);
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[self.in_channels, h, b, t], dx).expect("shape matches")
    }
}
