use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{impl_module, Param};
use crate::error::{shape_err, Result};
use crate::real::{gemm, Real, Trans};
use crate::tensor::Tensor;

/// Unidirectional gated recurrent unit over `[I, B, T]`, zero initial state.
///
/// Gate rows are stacked reset, update, candidate:
/// `r = σ(W_ir x + b_ir + W_hr h + b_hr)`,
/// `z = σ(W_iz x + b_iz + W_hz h + b_hz)`,
/// `n = tanh(W_in x + b_in + r ∘ (W_hn h + b_hn))`,
/// `h' = (1 − z) ∘ n + z ∘ h`.
#[derive(Clone, Debug)]
pub struct Gru<F> {
    pub w_ih: Param<F>,
    pub w_hh: Param<F>,
    pub b_ih: Param<F>,
    pub b_hh: Param<F>,
    input: usize,
    hidden: usize,
}

impl_module!(Gru { param w_ih, param w_hh, param b_ih, param b_hh });

#[derive(Clone, Debug)]
pub struct GruCache<F> {
    x: Tensor<F>,
    // Per step, each [H, B].
    r: Vec<F>,
    z: Vec<F>,
    n: Vec<F>,
    ghn: Vec<F>,
    h_prev: Vec<F>,
}

fn sigmoid<F: Real>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

impl<F: Real> Gru<F> {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / libm::sqrt(hidden as f64);
        Self {
            w_ih: Param::uniform(&[3 * hidden, input], bound, rng),
            w_hh: Param::uniform(&[3 * hidden, hidden], bound, rng),
            b_ih: Param::uniform(&[3 * hidden], bound, rng),
            b_hh: Param::uniform(&[3 * hidden], bound, rng),
            input,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<(Tensor<F>, GruCache<F>)> {
        if x.rank() != 3 || x.shape()[0] != self.input {
            return Err(shape_err!(
                "gru expects [{}, B, T], got {:?}",
                self.input,
                x.shape()
            ));
        }
        let (_, b, t) = x.dims3();
        let h = self.hidden;
        let bt = b * t;
        let hb = h * b;
        let mut gi = vec![F::zero(); 3 * h * bt];
        gemm(
            3 * h,
            bt,
            self.input,
            F::one(),
            self.w_ih.value.data(),
            Trans::No,
            x.data(),
            Trans::No,
            F::zero(),
            &mut gi,
        );
        for (row, &bias) in gi.chunks_exact_mut(bt).zip(self.b_ih.value.data()) {
            row.iter_mut().for_each(|v| *v = *v + bias);
        }
        let bhh = self.b_hh.value.data();
        let mut r = vec![F::zero(); t * hb];
        let mut z = vec![F::zero(); t * hb];
        let mut n = vec![F::zero(); t * hb];
        let mut ghn = vec![F::zero(); t * hb];
        let mut h_prev = vec![F::zero(); t * hb];
        let mut y = vec![F::zero(); h * bt];
        let mut state = vec![F::zero(); hb];
        let mut gh = vec![F::zero(); 3 * hb];
        for ti in 0..t {
            h_prev[ti * hb..(ti + 1) * hb].copy_from_slice(&state);
            gemm(
                3 * h,
                b,
                h,
                F::one(),
                self.w_hh.value.data(),
                Trans::No,
                &state,
                Trans::No,
                F::zero(),
                &mut gh,
            );
            for j in 0..h {
                for bi in 0..b {
                    let col = bi * t + ti;
                    let k = j * b + bi;
                    let rv = sigmoid(gi[j * bt + col] + gh[j * b + bi] + bhh[j]);
                    let zv = sigmoid(gi[(h + j) * bt + col] + gh[(h + j) * b + bi] + bhh[h + j]);
                    let hn = gh[(2 * h + j) * b + bi] + bhh[2 * h + j];
                    let nv = (gi[(2 * h + j) * bt + col] + rv * hn).tanh();
                    let hv = (F::one() - zv) * nv + zv * state[k];
                    let o = ti * hb + k;
                    r[o] = rv;
                    z[o] = zv;
                    n[o] = nv;
                    ghn[o] = hn;
                    state[k] = hv;
                    y[(j * b + bi) * t + ti] = hv;
                }
            }
        }
        let y = Tensor::from_vec(&[h, b, t], y)?;
        Ok((
            y,
            GruCache {
                x: x.clone(),
                r,
                z,
                n,
                ghn,
                h_prev,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &GruCache<F>,
        dy: &Tensor<F>,
        param_grads: bool,
    ) -> Tensor<F> {
        let (_, b, t) = cache.x.dims3();
        let h = self.hidden;
        assert_eq!(dy.shape(), &[h, b, t], "gru backward shape");
        let bt = b * t;
        let hb = h * b;
        let mut dgi = vec![F::zero(); 3 * h * bt];
        let mut dh = vec![F::zero(); hb];
        let mut dgh = vec![F::zero(); 3 * hb];
        let mut dh_direct = vec![F::zero(); hb];
        let dyd = dy.data();
        for ti in (0..t).rev() {
            for j in 0..h {
                for bi in 0..b {
                    let k = j * b + bi;
                    let o = ti * hb + k;
                    let col = bi * t + ti;
                    let g = dh[k] + dyd[(j * b + bi) * t + ti];
                    let (rv, zv, nv, hn, hp) = (
                        cache.r[o],
                        cache.z[o],
                        cache.n[o],
                        cache.ghn[o],
                        cache.h_prev[o],
                    );
                    let dn = g * (F::one() - zv);
                    let dz = g * (hp - nv);
                    dh_direct[k] = g * zv;
                    let dnp = dn * (F::one() - nv * nv);
                    let dzp = dz * zv * (F::one() - zv);
                    let drp = dnp * hn * rv * (F::one() - rv);
                    dgi[j * bt + col] = drp;
                    dgi[(h + j) * bt + col] = dzp;
                    dgi[(2 * h + j) * bt + col] = dnp;
                    dgh[j * b + bi] = drp;
                    dgh[(h + j) * b + bi] = dzp;
                    dgh[(2 * h + j) * b + bi] = dnp * rv;
                }
            }
            if param_grads {
                let hp = &cache.h_prev[ti * hb..(ti + 1) * hb];
                gemm(
                    3 * h,
                    h,
                    b,
                    F::one(),
                    &dgh,
                    Trans::No,
                    hp,
                    Trans::Yes,
                    F::one(),
                    self.w_hh.grad.data_mut(),
                );
                for (gb, row) in self
                    .b_hh
                    .grad
                    .data_mut()
                    .iter_mut()
                    .zip(dgh.chunks_exact(b))
                {
                    *gb = *gb + row.iter().copied().sum();
                }
            }
            gemm(
                h,
                b,
                3 * h,
                F::one(),
                self.w_hh.value.data(),
                Trans::Yes,
                &dgh,
                Trans::No,
                F::zero(),
                &mut dh,
            );
            for (d, &e) in dh.iter_mut().zip(&dh_direct) {
                *d = *d + e;
            }
        }
        if param_grads {
            gemm(
                3 * h,
                self.input,
                bt,
                F::one(),
                &dgi,
                Trans::No,
                cache.x.data(),
                Trans::Yes,
                F::one(),
                self.w_ih.grad.data_mut(),
            );
            for (gb, row) in self
                .b_ih
                .grad
                .data_mut()
                .iter_mut()
                .zip(dgi.chunks_exact(bt))
            {
                *gb = *gb + row.iter().copied().sum();
            }
        }
        let mut dx = vec![F::zero(); self.input * bt];
        gemm(
            self.input,
            bt,
            3 * h,
            F::one(),
            self.w_ih.value.data(),
            Trans::Yes,
            &dgi,
            Trans::No,
            F::zero(),
            &mut dx,
        );
        Tensor::from_vec(&[self.input, b, t], dx).expect("shape matches")
    }
}
