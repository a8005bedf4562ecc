use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::Scalar;

/// A named-by-position trainable tensor stored flat in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Draws every entry from N(0, std²).
    pub fn normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("valid std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything that owns trainable parameters.
///
/// Gradients are stored in a second instance of the same type, so a model
/// and its gradient buffer always enumerate parameters in the same order.
pub trait Parameterized<T: Scalar>: Clone {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>);

    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out
    }

    /// Exact number of trainable scalars.
    fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Same structure, every entry zero. Used as a gradient buffer.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, p) in z.named_params_mut() {
            p.data.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    fn fill_zero(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// `self += other`, parameter by parameter.
    fn accumulate(&mut self, other: &Self) {
        let src = other.named_params();
        for ((_, dst), (_, s)) in self.named_params_mut().into_iter().zip(src) {
            for (d, v) in dst.data.iter_mut().zip(&s.data) {
                *d += *v;
            }
        }
    }

    fn scale(&mut self, k: T) {
        for (_, p) in self.named_params_mut() {
            p.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    fn all_finite(&self) -> bool {
        self.named_params()
            .iter()
            .all(|(_, p)| p.data.iter().all(|v| v.is_finite()))
    }
}

/// Helper for implementors: pushes a leaf parameter under `prefix.name`.
pub(crate) fn leaf<'a, T>(
    prefix: &str,
    name: &str,
    p: &'a Param<T>,
    out: &mut Vec<(String, &'a Param<T>)>,
) {
    out.push((join(prefix, name), p));
}

pub(crate) fn leaf_mut<'a, T>(
    prefix: &str,
    name: &str,
    p: &'a mut Param<T>,
    out: &mut Vec<(String, &'a mut Param<T>)>,
) {
    out.push((join(prefix, name), p));
}

pub(crate) fn child(prefix: &str, name: &str) -> String {
    join(prefix, name)
}
