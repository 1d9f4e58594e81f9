#![allow(dead_code, clippy::type_complexity)]

pub mod cases;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unagan_core::nn::{Module, SlotMut};
use unagan_core::Tensor;

pub const FD_EPS: f64 = 1e-3;
pub const FD_RTOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Weighted sum `Σ w_i y_i`, the scalar probe used by gradient checks.
pub fn probe(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// A forward evaluation: scalar probe value plus the leaky-ReLU sign
/// pattern it was computed in.
pub type Probe = (f64, Vec<bool>);

#[derive(Debug, Default)]
pub struct CheckReport {
    pub checked: usize,
    /// Stencils that crossed a leaky-ReLU kink; the derivative is not
    /// defined across them, so they are excluded from comparison.
    pub kinked: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn kinked_fraction(&self) -> f64 {
        self.kinked as f64 / (self.checked + self.kinked).max(1) as f64
    }

    pub fn summary(&self) -> String {
        format!(
            "{} elements, {} kinked stencils excluded, worst rel err {:.2e}, {} failures",
            self.checked,
            self.kinked,
            self.worst_rel,
            self.failures.len()
        )
    }
}

/// Element-wise `|a - n| <= rtol · max(|a|, |n|) + atol`; `None` marks a
/// kinked stencil.
pub fn compare(
    name: &str,
    analytic: &[f64],
    numeric: &[Option<f64>],
    rtol: f64,
    atol: f64,
    report: &mut CheckReport,
) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (&a, n)) in analytic.iter().zip(numeric).enumerate() {
        let Some(n) = *n else {
            report.kinked += 1;
            continue;
        };
        let err = (a - n).abs();
        let scale = a.abs().max(n.abs());
        report.checked += 1;
        if scale > atol {
            report.worst_rel = report.worst_rel.max(err / scale);
        }
        if err > rtol * scale + atol {
            report
                .failures
                .push(format!("{name}[{i}]: analytic {a:.9e} numeric {n:.9e}"));
        }
    }
}

/// Fourth-order central difference
/// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`. A stencil with a point
/// in a different leaky-ReLU region than `x` is retried at `h/10` and
/// `h/100`; `None` when every attempt crosses a kink.
fn central(h: f64, base: &[bool], mut eval: impl FnMut(f64) -> Probe) -> Option<f64> {
    'step: for step in [h, h / 10.0, h / 100.0] {
        let mut vals = [0.0; 4];
        for (v, d) in vals.iter_mut().zip([2.0 * step, step, -step, -2.0 * step]) {
            let (f, signs) = eval(d);
            if signs != base {
                continue 'step;
            }
            *v = f;
        }
        return Some((-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * step));
    }
    None
}

/// Central differences of a probe with respect to parameter elements of
/// `module`. `select` picks which element indices of each parameter tensor
/// to perturb (all of them when it returns `None`). `probe` must only run
/// forward passes.
pub fn numeric_param_grads<M: Module<f64>>(
    module: &mut M,
    eps: f64,
    mut select: impl FnMut(&str, usize) -> Option<Vec<usize>>,
    mut probe: impl FnMut(&M) -> Probe,
) -> Vec<(String, Vec<usize>, Vec<Option<f64>>)> {
    let base = probe(module).1;
    let names: Vec<(String, usize)> = module
        .named_tensors_mut("")
        .into_iter()
        .filter_map(|(n, s)| match s {
            SlotMut::Param(p) => Some((n, p.value.len())),
            SlotMut::Buffer(_) => None,
        })
        .collect();
    let mut out = Vec::new();
    for (pi, (name, len)) in names.iter().enumerate() {
        let idx = select(name, *len).unwrap_or_else(|| (0..*len).collect());
        let g = idx
            .iter()
            .map(|&i| {
                let orig = set_param(module, pi, i, None);
                let r = central(eps, &base, |d| {
                    set_param(module, pi, i, Some(orig + d));
                    probe(module)
                });
                set_param(module, pi, i, Some(orig));
                r
            })
            .collect();
        out.push((name.clone(), idx, g));
    }
    out
}

fn set_param<M: Module<f64>>(
    module: &mut M,
    param_index: usize,
    elem: usize,
    value: Option<f64>,
) -> f64 {
    let mut params = module.params_mut();
    let p = &mut params[param_index].1;
    let old = p.value.data()[elem];
    if let Some(v) = value {
        p.value.data_mut()[elem] = v;
    }
    old
}

/// Compares accumulated `grad` buffers of `module` against the numeric
/// estimates.
pub fn check_params<M: Module<f64>>(
    module: &mut M,
    numeric: &[(String, Vec<usize>, Vec<Option<f64>>)],
    rtol: f64,
    atol: f64,
    report: &mut CheckReport,
) {
    let params = module.params_mut();
    for ((name, p), (nname, idx, num)) in params.iter().zip(numeric) {
        assert_eq!(name, nname);
        let a: Vec<f64> = idx.iter().map(|&i| p.grad.data()[i]).collect();
        compare(name, &a, num, rtol, atol, report);
    }
}

/// Central differences with respect to the elements `idx` of `x`.
pub fn numeric_input_grad(
    x: &Tensor<f64>,
    eps: f64,
    idx: &[usize],
    mut probe: impl FnMut(&Tensor<f64>) -> Probe,
) -> Vec<Option<f64>> {
    let base = probe(x).1;
    let mut xp = x.clone();
    idx.iter()
        .map(|&i| {
            let orig = xp.data()[i];
            let r = central(eps, &base, |d| {
                xp.data_mut()[i] = orig + d;
                probe(&xp)
            });
            xp.data_mut()[i] = orig;
            r
        })
        .collect()
}

/// `count` distinct indices below `len` (all of them when `len <= count`).
pub fn subsample(len: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut idx = rand::seq::index::sample(rng, len, count).into_vec();
    idx.sort_unstable();
    idx
}

/// Checks parameter and input gradients of one block under the probe
/// `Σ w·y`. `forward` returns the output, its cache and the leaky-ReLU
/// signs; `per_tensor` caps the elements checked per tensor.
pub fn check_block<M: Module<f64>, C>(
    module: &mut M,
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    per_tensor: Option<usize>,
    forward: &dyn Fn(&M, &Tensor<f64>) -> (Tensor<f64>, C, Vec<bool>),
    backward: &dyn Fn(&mut M, &C, &Tensor<f64>) -> Tensor<f64>,
    report: &mut CheckReport,
) {
    let mut r = rng(0x5eed);
    module.zero_grad();
    let (y, cache, _) = forward(module, x);
    assert_eq!(y.shape(), w.shape(), "probe weights must match the output");
    let dx = backward(module, &cache, w);
    let numeric = numeric_param_grads(
        module,
        FD_EPS,
        |_, len| per_tensor.map(|c| subsample(len, c, &mut r)),
        |m| {
            let (y, _, signs) = forward(m, x);
            (probe(&y, w), signs)
        },
    );
    check_params(module, &numeric, FD_RTOL, 1e-8, report);
    let idx = match per_tensor {
        Some(c) => subsample(x.len(), 4 * c, &mut r),
        None => (0..x.len()).collect(),
    };
    let nx = numeric_input_grad(x, FD_EPS, &idx, |xp| {
        let (y, _, signs) = forward(module, xp);
        (probe(&y, w), signs)
    });
    let ax: Vec<f64> = idx.iter().map(|&i| dx.data()[i]).collect();
    compare("input", &ax, &nx, FD_RTOL, 1e-8, report);
}
