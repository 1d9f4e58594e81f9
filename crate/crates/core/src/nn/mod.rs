//! Layers with explicit forward caches and hand-written backward passes.
//!
//! Each layer's `forward` borrows the parameters immutably and returns the
//! output together with whatever the backward pass needs. `backward`
//! accumulates parameter gradients into [`Param::grad`] (unless asked not to)
//! and returns the gradient with respect to the layer input.

mod act;
mod conv;
mod gru;
mod norm;
mod resample;

pub use act::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
pub use conv::{Conv1d, Conv1dCache, Conv2d, Conv2dCache};
pub use gru::{Gru, GruCache};
pub use norm::{BatchNorm, BatchNormCache, BN_EPS, BN_MOMENTUM};
pub use resample::{avg_pool2, avg_pool2_backward, upsample2x, upsample2x_backward};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::real::Real;
use crate::tensor::Tensor;

/// Batch-norm behaviour: batch statistics while training, running
/// statistics at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Boundary handling along the time axis. Frequency axes always zero-pad.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Zero,
    /// Wrap around within each sequence; used to test shift equivariance.
    Circular,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<F> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
}

impl<F: Real> Param<F> {
    pub fn new(value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| F::lit(dist.sample(rng))).collect();
        Self::new(Tensor::from_vec(shape, data).expect("shape matches"))
    }
}

/// Borrowed view of a named model tensor.
pub enum Slot<'a, F> {
    Param(&'a Param<F>),
    Buffer(&'a Tensor<F>),
}

pub enum SlotMut<'a, F> {
    Param(&'a mut Param<F>),
    Buffer(&'a mut Tensor<F>),
}

impl<'a, F> Slot<'a, F> {
    pub fn tensor(&self) -> &'a Tensor<F> {
        match self {
            Slot::Param(p) => &p.value,
            Slot::Buffer(b) => b,
        }
    }
}

impl<F> SlotMut<'_, F> {
    pub fn tensor_mut(&mut self) -> &mut Tensor<F> {
        match self {
            SlotMut::Param(p) => &mut p.value,
            SlotMut::Buffer(b) => b,
        }
    }
}

/// Named traversal over parameters and buffers, in a fixed order.
pub trait Module<F: Real> {
    fn slots<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Slot<'a, F>)>);
    fn slots_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, SlotMut<'a, F>)>);

    fn named_tensors(&self, prefix: &str) -> Vec<(String, Slot<'_, F>)> {
        let mut out = Vec::new();
        self.slots(prefix, &mut out);
        out
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, SlotMut<'_, F>)> {
        let mut out = Vec::new();
        self.slots_mut(prefix, &mut out);
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<F>)> {
        self.named_tensors_mut("")
            .into_iter()
            .filter_map(|(n, s)| match s {
                SlotMut::Param(p) => Some((n, p)),
                SlotMut::Buffer(_) => None,
            })
            .collect()
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(F::zero());
        }
    }

    fn param_count(&self) -> usize {
        self.named_tensors("")
            .iter()
            .filter_map(|(_, s)| match s {
                Slot::Param(p) => Some(p.value.len()),
                Slot::Buffer(_) => None,
            })
            .sum()
    }
}

/// Read access to the leaky-ReLU outputs a forward pass recorded, in
/// forward order. The sign pattern of these tensors identifies the
/// piecewise-smooth region the network was evaluated in.
pub trait Activations<F> {
    fn visit_activations(&self, f: &mut dyn FnMut(&Tensor<F>));

    fn activation_signs(&self) -> Vec<bool>
    where
        F: Real,
    {
        let mut out = Vec::new();
        self.visit_activations(&mut |t| out.extend(t.data().iter().map(|v| *v < F::zero())));
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

/// Implements [`Module`] from a list of `param`, `buffer`, `child`,
/// `children` (a `Vec` of modules) and `opt` (an `Option` module) fields.
macro_rules! impl_module {
    ($ty:ident { $($kind:ident $field:ident),* $(,)? }) => {
        impl<F: $crate::real::Real> $crate::nn::Module<F> for $ty<F> {
            fn slots<'a>(
                &'a self,
                prefix: &str,
                out: &mut alloc::vec::Vec<(alloc::string::String, $crate::nn::Slot<'a, F>)>,
            ) {
                $( $crate::nn::impl_module!(@ref $kind, self.$field, prefix, stringify!($field), out); )*
            }
            fn slots_mut<'a>(
                &'a mut self,
                prefix: &str,
                out: &mut alloc::vec::Vec<(alloc::string::String, $crate::nn::SlotMut<'a, F>)>,
            ) {
                $( $crate::nn::impl_module!(@mut $kind, self.$field, prefix, stringify!($field), out); )*
            }
        }
    };
    (@ref param, $e:expr, $p:expr, $n:expr, $out:expr) => {
        $out.push(($crate::nn::join($p, $n), $crate::nn::Slot::Param(&$e)))
    };
    (@ref buffer, $e:expr, $p:expr, $n:expr, $out:expr) => {
        $out.push(($crate::nn::join($p, $n), $crate::nn::Slot::Buffer(&$e)))
    };
    (@ref child, $e:expr, $p:expr, $n:expr, $out:expr) => {
        $crate::nn::Module::slots(&$e, &$crate::nn::join($p, $n), $out)
    };
    (@ref opt, $e:expr, $p:expr, $n:expr, $out:expr) => {
        if let Some(c) = &$e {
            $crate::nn::Module::slots(c, &$crate::nn::join($p, $n), $out)
        }
    };
    (@ref children, $e:expr, $p:expr, $n:expr, $out:expr) => {
        for (i, c) in $e.iter().enumerate() {
            let name = $crate::nn::join(&$crate::nn::join($p, $n), &alloc::format!("{i}"));
            $crate::nn::Module::slots(c, &name, $out)
        }
    };
    (@mut param, $e:expr, $p:expr, $n:expr, $out:expr) => {
        $out.push(($crate::nn::join($p, $n), $crate::nn::SlotMut::Param(&mut $e)))
    };
    (@mut buffer, $e:expr, $p:expr, $n:expr, $out:expr) => {
        $out.push(($crate::nn::join($p, $n), $crate::nn::SlotMut::Buffer(&mut $e)))
    };
    (@mut child, $e:expr, $p:expr, $n:expr, $out:expr) => {
        $crate::nn::Module::slots_mut(&mut $e, &$crate::nn::join($p, $n), $out)
    };
    (@mut opt, $e:expr, $p:expr, $n:expr, $out:expr) => {
        if let Some(c) = &mut $e {
            $crate::nn::Module::slots_mut(c, &$crate::nn::join($p, $n), $out)
        }
    };
    (@mut children, $e:expr, $p:expr, $n:expr, $out:expr) => {
        for (i, c) in $e.iter_mut().enumerate() {
            let name = $crate::nn::join(&$crate::nn::join($p, $n), &alloc::format!("{i}"));
            $crate::nn::Module::slots_mut(c, &name, $out)
        }
    };
}
pub(crate) use impl_module;

/// Copies every tensor of `src` into `dst` after converting the scalar
/// type. Both modules must share an architecture.
pub fn cast_into<A: Real, B: Real, M: Module<A>, N: Module<B>>(src: &M, dst: &mut N) {
    let from = src.named_tensors("");
    let mut to = dst.named_tensors_mut("");
    assert_eq!(from.len(), to.len(), "architectures differ");
    for ((na, sa), (nb, sb)) in from.iter().zip(to.iter_mut()) {
        assert_eq!(na, nb, "architectures differ");
        let t = sb.tensor_mut();
        assert_eq!(t.shape(), sa.tensor().shape());
        for (d, s) in t.data_mut().iter_mut().zip(sa.tensor().data()) {
            *d = B::lit(s.f64());
        }
    }
}
