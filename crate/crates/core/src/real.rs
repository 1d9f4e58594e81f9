//! Scalar abstraction so the same network code runs in `f32` for training
//! and in `f64` for finite-difference gradient checks.

use core::fmt::Debug;
use core::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + Sum + 'static
{
    /// `c = alpha * a · b + beta * c` on strided matrices.
    ///
    /// # Safety
    /// Every index reachable through the given dimensions and strides must
    /// be in bounds of the corresponding pointer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_f32(v: f32) -> Self {
        Self::lit(v as f64)
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().unwrap_or(f32::NAN)
    }
}

impl Real for f32 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        #[cfg(feature = "openblas")]
        if blas::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) {
            return;
        }
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        #[cfg(feature = "openblas")]
        if blas::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) {
            return;
        }
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// System OpenBLAS through its CBLAS interface. Only row-major operands
/// with unit stride along one axis are forwarded; anything else falls back
/// to `matrixmultiply`.
///
/// Each precision is checked once against a direct product before use.
/// Some OpenBLAS builds select a kernel that returns wrong results on CPUs
/// it misdetects (observed: the Cooperlake double-precision kernel); such a
/// precision then stays on `matrixmultiply`.
#[cfg(feature = "openblas")]
mod blas {
    use alloc::vec::Vec;
    use core::sync::atomic::{AtomicU8, Ordering};

    const UNCHECKED: u8 = 0;
    const GOOD: u8 = 1;
    const BAD: u8 = 2;

    const ROW_MAJOR: i32 = 101;
    const NO_TRANS: i32 = 111;
    const TRANS: i32 = 112;

    #[link(name = "openblas")]
    extern "C" {
        fn cblas_sgemm(
            order: i32,
            ta: i32,
            tb: i32,
            m: i32,
            n: i32,
            k: i32,
            alpha: f32,
            a: *const f32,
            lda: i32,
            b: *const f32,
            ldb: i32,
            beta: f32,
            c: *mut f32,
            ldc: i32,
        );
        fn cblas_dgemm(
            order: i32,
            ta: i32,
            tb: i32,
            m: i32,
            n: i32,
            k: i32,
            alpha: f64,
            a: *const f64,
            lda: i32,
            b: *const f64,
            ldb: i32,
            beta: f64,
            c: *mut f64,
            ldc: i32,
        );
    }

    /// CBLAS transpose flag and leading dimension for a `rows × cols`
    /// operand with the given strides.
    fn layout(rows: usize, cols: usize, rs: isize, cs: isize) -> Option<(i32, i32)> {
        if cs == 1 && rs >= cols.max(1) as isize {
            Some((NO_TRANS, i32::try_from(rs).ok()?))
        } else if rs == 1 && cs >= rows.max(1) as isize {
            Some((TRANS, i32::try_from(cs).ok()?))
        } else {
            None
        }
    }

    macro_rules! forward {
        ($name:ident, $f:ty, $cblas:ident, $state:ident, $check:ident) => {
            static $state: AtomicU8 = AtomicU8::new(UNCHECKED);

            /// Compares a few products, both with `b` as stored and
            /// transposed, against direct summation.
            fn $check() -> bool {
                for (m, k, n) in [(256usize, 8usize, 256usize), (80, 8, 1536), (33, 17, 65)] {
                    let a: Vec<$f> = (0..m * k)
                        .map(|i| ((i * 7919) % 1000) as $f / 1000.0 - 0.5)
                        .collect();
                    let b: Vec<$f> = (0..k * n)
                        .map(|i| ((i * 104_729) % 997) as $f / 997.0 - 0.5)
                        .collect();
                    for (tb, ldb) in [(NO_TRANS, n), (TRANS, k)] {
                        let mut c: Vec<$f> = (0..m * n).map(|i| (i % 7) as $f).collect();
                        // SAFETY: every buffer holds exactly the extent CBLAS reads or writes.
                        unsafe {
                            $cblas(
                                ROW_MAJOR,
                                NO_TRANS,
                                tb,
                                m as i32,
                                n as i32,
                                k as i32,
                                1.0,
                                a.as_ptr(),
                                k as i32,
                                b.as_ptr(),
                                ldb as i32,
                                0.5,
                                c.as_mut_ptr(),
                                n as i32,
                            );
                        }
                        for i in 0..m {
                            for j in 0..n {
                                let mut want = 0.5 * ((i * n + j) % 7) as f64;
                                for p in 0..k {
                                    let bv = if tb == NO_TRANS {
                                        b[p * n + j]
                                    } else {
                                        b[j * k + p]
                                    };
                                    want += a[i * k + p] as f64 * bv as f64;
                                }
                                if !((c[i * n + j] as f64 - want).abs() <= 1e-3) {
                                    return false;
                                }
                            }
                        }
                    }
                }
                true
            }

            #[allow(clippy::too_many_arguments)]
            pub(super) unsafe fn $name(
                m: usize,
                k: usize,
                n: usize,
                alpha: $f,
                a: *const $f,
                rsa: isize,
                csa: isize,
                b: *const $f,
                rsb: isize,
                csb: isize,
                beta: $f,
                c: *mut $f,
                rsc: isize,
                csc: isize,
            ) -> bool {
                if !sound(&$state, $check) {
                    return false;
                }
                let (Some((ta, lda)), Some((tb, ldb))) =
                    (layout(m, k, rsa, csa), layout(k, n, rsb, csb))
                else {
                    return false;
                };
                if csc != 1 || rsc < n.max(1) as isize {
                    return false;
                }
                let (Ok(mi), Ok(ni), Ok(ki), Ok(ldc)) = (
                    i32::try_from(m),
                    i32::try_from(n),
                    i32::try_from(k),
                    i32::try_from(rsc),
                ) else {
                    return false;
                };
                $cblas(
                    ROW_MAJOR, ta, tb, mi, ni, ki, alpha, a, lda, b, ldb, beta, c, ldc,
                );
                true
            }
        };
    }

    forward!(sgemm, f32, cblas_sgemm, SGEMM_STATE, sgemm_is_sound);
    forward!(dgemm, f64, cblas_dgemm, DGEMM_STATE, dgemm_is_sound);

    fn sound(state: &AtomicU8, check: fn() -> bool) -> bool {
        match state.load(Ordering::Relaxed) {
            GOOD => true,
            BAD => false,
            _ => {
                let ok = check();
                state.store(if ok { GOOD } else { BAD }, Ordering::Relaxed);
                ok
            }
        }
    }

    /// Whether single and double precision products go to OpenBLAS.
    pub(super) fn active() -> (bool, bool) {
        (
            sound(&SGEMM_STATE, sgemm_is_sound),
            sound(&DGEMM_STATE, dgemm_is_sound),
        )
    }
}

/// Whether single and double precision products are delegated to the
/// system OpenBLAS (both false without the `openblas` feature).
pub fn blas_in_use() -> (bool, bool) {
    #[cfg(feature = "openblas")]
    return blas::active();
    #[cfg(not(feature = "openblas"))]
    (false, false)
}

/// Whether an operand is used as stored (row-major) or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// Row-major matrix product `c (m×n) = alpha · op(a) · op(b) + beta · c`.
///
/// `a` holds `op(a)` as an m×k matrix when `ta == No`, or as k×m when
/// `ta == Yes`; likewise `b` for k×n.
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Real>(
    m: usize,
    n: usize,
    k: usize,
    alpha: F,
    a: &[F],
    ta: Trans,
    b: &[F],
    tb: Trans,
    beta: F,
    c: &mut [F],
) {
    assert!(a.len() >= m * k, "gemm: lhs too short");
    assert!(b.len() >= k * n, "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: out too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v = if beta == F::zero() {
                F::zero()
            } else {
                *v * beta
            };
        }
        return;
    }
    let (rsa, csa) = match ta {
        Trans::No => (k as isize, 1),
        Trans::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (n as isize, 1),
        Trans::Yes => (1, k as isize),
    };
    // SAFETY: the asserts above bound every strided access.
    unsafe {
        F::raw_gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}
