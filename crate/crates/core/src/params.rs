//! Named parameter tensors and the Adam optimizer.
//!
//! Every learnable struct implements [`Params`], which walks its tensors as
//! flat slices under dotted names (`instance.encoder.layers.0.wq`). The same
//! struct type doubles as its own gradient accumulator.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub trait Params {
    fn visit(&self, name: &str, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));
}

pub(crate) fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

impl Params for Array1<f64> {
    fn visit(&self, name: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(name, self.shape(), self.as_slice().expect("standard layout"));
    }

    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let shape = self.shape().to_vec();
        f(name, &shape, self.as_slice_mut().expect("standard layout"));
    }
}

impl Params for Array2<f64> {
    fn visit(&self, name: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(name, self.shape(), self.as_slice().expect("standard layout"));
    }

    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let shape = self.shape().to_vec();
        f(name, &shape, self.as_slice_mut().expect("standard layout"));
    }
}

impl<T: Params> Params for Vec<T> {
    fn visit(&self, name: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, item) in self.iter().enumerate() {
            item.visit(&join(name, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (i, item) in self.iter_mut().enumerate() {
            item.visit_mut(&join(name, &i.to_string()), f);
        }
    }
}

impl<T: Params> Params for Option<T> {
    fn visit(&self, name: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        if let Some(x) = self {
            x.visit(name, f);
        }
    }

    fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        if let Some(x) = self {
            x.visit_mut(name, f);
        }
    }
}

/// Implements [`Params`] for a struct by visiting the listed fields in order.
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::params::Params for $ty {
            fn visit(&self, name: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
                $( self.$field.visit(&$crate::params::join(name, stringify!($field)), f); )*
            }

            fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
                $( self.$field.visit_mut(&$crate::params::join(name, stringify!($field)), f); )*
            }
        }
    };
}
pub(crate) use impl_params;

pub fn zero<P: Params>(p: &mut P) {
    p.visit_mut("", &mut |_, _, x| x.fill(0.0));
}

pub fn zeros_like<P: Params + Clone>(p: &P) -> P {
    let mut z = p.clone();
    zero(&mut z);
    z
}

pub fn count<P: Params>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, _, x| n += x.len());
    n
}

/// Flat `name -> (shape, values)` snapshot.
pub fn snapshot<P: Params>(p: &P, prefix: &str) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
    let mut out = BTreeMap::new();
    p.visit(prefix, &mut |name, shape, x| {
        out.insert(name.to_string(), (shape.to_vec(), x.to_vec()));
    });
    out
}

pub fn all_finite<P: Params>(p: &P) -> bool {
    let mut ok = true;
    p.visit("", &mut |_, _, x| ok &= x.iter().all(|v| v.is_finite()));
    ok
}

pub(crate) fn uniform_array2(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-scale..scale))
}

pub(crate) fn uniform_array1(n: usize, scale: f64, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.gen_range(-scale..scale))
}

pub const GRAD_FLOOR: f64 = 1e-6;

/// Central-difference check of `analytic` against `loss` at `p`.
///
/// Returns, per tensor, `‖a − n‖ / max(‖a‖, ‖n‖, GRAD_FLOOR)`. The floor keeps
/// tensors whose true gradient is identically zero (a key bias under
/// softmax shift invariance) from dividing rounding noise by itself.
pub fn gradient_errors<P: Params + Clone>(
    p: &P,
    analytic: &P,
    h: f64,
    loss: &dyn Fn(&P) -> f64,
) -> BTreeMap<String, f64> {
    let grads = snapshot(analytic, "");
    let mut names = Vec::new();
    p.visit("", &mut |name, _, x| names.push((name.to_string(), x.len())));
    let mut out = BTreeMap::new();
    let mut shifted = p.clone();
    for (name, len) in names {
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let set = |target: &mut P, delta: f64| {
                p.visit("", &mut |n, _, x| {
                    if n == name {
                        let v = x[i] + delta;
                        target.visit_mut("", &mut |m, _, y| {
                            if m == name {
                                y[i] = v;
                            }
                        });
                    }
                });
            };
            set(&mut shifted, h);
            let up = loss(&shifted);
            set(&mut shifted, -h);
            let down = loss(&shifted);
            set(&mut shifted, 0.0);
            *slot = (up - down) / (2.0 * h);
        }
        let a = &grads[&name].1;
        let diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nn);
        out.insert(name, diff / scale.max(GRAD_FLOOR));
    }
    out
}

/// How a tensor is updated when it takes part in a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Every element.
    Dense,
    /// Only rows with a nonzero gradient; other rows keep value and moments.
    Rows,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamSlot {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Elementwise gradient clip; `None` disables clipping.
    pub clip: Option<f64>,
    pub slots: BTreeMap<String, AdamSlot>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: None,
            slots: BTreeMap::new(),
        }
    }

    /// One Adam step on the tensors of `params` selected by `select`, which
    /// returns `None` for tensors outside this step. Tensor names, and so
    /// optimizer slots, are rooted at `prefix`. `grads` must have the same
    /// structure as `params`.
    pub fn step<P: Params>(
        &mut self,
        prefix: &str,
        params: &mut P,
        grads: &P,
        select: &dyn Fn(&str) -> Option<UpdateMode>,
    ) {
        let mut grad_map: BTreeMap<String, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
        grads.visit(prefix, &mut |name, shape, g| {
            if select(name).is_some() {
                grad_map.insert(name.to_string(), (shape.to_vec(), g.to_vec()));
            }
        });
        let (lr, b1, b2, eps, clip) = (self.lr, self.beta1, self.beta2, self.eps, self.clip);
        let slots = &mut self.slots;
        params.visit_mut(prefix, &mut |name, shape, x| {
            let Some(mode) = select(name) else { return };
            let Some((_, g)) = grad_map.get(name) else { return };
            let slot = slots.entry(name.to_string()).or_insert_with(|| AdamSlot {
                step: 0,
                m: vec![0.0; x.len()],
                v: vec![0.0; x.len()],
            });
            slot.step += 1;
            let t = slot.step as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let cols = if shape.len() == 2 { shape[1] } else { x.len().max(1) };
            let rows = x.len() / cols.max(1);
            for r in 0..rows {
                let span = r * cols..(r + 1) * cols;
                if mode == UpdateMode::Rows && g[span.clone()].iter().all(|v| *v == 0.0) {
                    continue;
                }
                for i in span {
                    let gi = match clip {
                        Some(c) => g[i].clamp(-c, c),
                        None => g[i],
                    };
                    slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * gi;
                    slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * gi * gi;
                    let mhat = slot.m[i] / c1;
                    let vhat = slot.v[i] / c2;
                    x[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Toy {
        w: Array2<f64>,
        b: Array1<f64>,
    }
    impl_params!(Toy { w, b });

    #[test]
    fn names_and_counts() {
        let t = Toy {
            w: Array2::zeros((2, 3)),
            b: Array1::zeros(3),
        };
        let snap = snapshot(&t, "toy");
        assert_eq!(snap.keys().cloned().collect::<Vec<_>>(), vec!["toy.b", "toy.w"]);
        assert_eq!(count(&t), 9);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut t = Toy {
            w: Array2::from_elem((1, 2), 3.0),
            b: Array1::from_elem(1, -2.0),
        };
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let mut g = t.clone();
            g.w.mapv_inplace(|x| 2.0 * x);
            g.b.mapv_inplace(|x| 2.0 * x);
            opt.step("", &mut t, &g, &|_| Some(UpdateMode::Dense));
        }
        assert!(t.w.iter().chain(t.b.iter()).all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn row_mode_leaves_untouched_rows() {
        let mut t = Toy {
            w: Array2::from_elem((2, 2), 1.0),
            b: Array1::from_elem(1, 1.0),
        };
        let mut g = zeros_like(&t);
        g.w[[1, 0]] = 1.0;
        let mut opt = Adam::new(0.1);
        opt.step("toy", &mut t, &g, &|n| (n == "toy.w").then_some(UpdateMode::Rows));
        assert!(opt.slots.contains_key("toy.w"));
        assert_eq!(t.w.row(0).to_vec(), vec![1.0, 1.0]);
        assert!(t.w[[1, 0]] < 1.0);
        assert_eq!(t.w[[1, 1]], 1.0);
        assert_eq!(t.b[0], 1.0);
    }
}
