use ndarray::{Array3, Axis, Zip};

use super::param::{leaf, leaf_mut, Param, Parameterized};
use crate::Scalar;

/// Per-sample, per-channel normalization with a learned affine map.
///
/// Statistics never mix samples, so a batch can be processed one
/// sample at a time with identical results.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    eps: f64,
}

#[derive(Clone, Debug)]
pub struct NormCache<T> {
    xhat: Array3<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> InstanceNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], T::one()),
            beta: Param::zeros(&[channels]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Array3<T>) -> (Array3<T>, NormCache<T>) {
        let n = T::lit((x.dim().1 * x.dim().2) as f64);
        let eps = T::lit(self.eps);
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.dim().0);
        for mut plane in xhat.axis_iter_mut(Axis(0)) {
            let mean = plane.sum() / n;
            let var = plane.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            plane.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let mut y = xhat.clone();
        for ((mut plane, g), b) in y
            .axis_iter_mut(Axis(0))
            .zip(&self.gamma.data)
            .zip(&self.beta.data)
        {
            plane.mapv_inplace(|v| v * *g + *b);
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &NormCache<T>, grad_out: &Array3<T>, grads: &mut Self) -> Array3<T> {
        let n = T::lit((grad_out.dim().1 * grad_out.dim().2) as f64);
        let mut dx = Array3::<T>::zeros(grad_out.dim());
        for (c, ((g, xh), mut out)) in grad_out
            .axis_iter(Axis(0))
            .zip(cache.xhat.axis_iter(Axis(0)))
            .zip(dx.axis_iter_mut(Axis(0)))
            .enumerate()
        {
            let sum_g = g.sum();
            let sum_gx = Zip::from(&g).and(&xh).fold(T::zero(), |acc, a, b| acc + *a * *b);
            grads.beta.data[c] += sum_g;
            grads.gamma.data[c] += sum_gx;
            let scale = self.gamma.data[c] * cache.inv_std[c] / n;
            Zip::from(&mut out).and(&g).and(&xh).for_each(|o, g, xh| {
                *o = scale * (n * *g - sum_g - *xh * sum_gx);
            });
        }
        dx
    }
}

impl<T: Scalar> Parameterized<T> for InstanceNorm<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        leaf(prefix, "gamma", &self.gamma, out);
        leaf(prefix, "beta", &self.beta, out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        leaf_mut(prefix, "gamma", &mut self.gamma, out);
        leaf_mut(prefix, "beta", &mut self.beta, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut norm = InstanceNorm::<f64>::new(2);
        norm.gamma.data = vec![1.3, -0.7];
        norm.beta.data = vec![0.2, 0.1];
        let x = Array3::from_shape_fn((2, 4, 3), |_| rng.random::<f64>());
        let probe = Array3::from_shape_fn((2, 4, 3), |_| rng.random::<f64>() - 0.5);
        let f = |x: &Array3<f64>| (&norm.forward(x).0 * &probe).sum();
        let (_, cache) = norm.forward(&x);
        let mut grads = norm.zeros_like();
        let dx = norm.backward(&cache, &probe, &mut grads);
        let h = 1e-6;
        for idx in [(0, 0, 0), (1, 2, 1), (0, 3, 2)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let num = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((num - dx[idx]).abs() < 1e-6, "{idx:?}: {num} vs {}", dx[idx]);
        }
    }

    #[test]
    fn output_is_standardized() {
        let norm = InstanceNorm::<f64>::new(1);
        let x = Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = norm.forward(&x);
        assert!(y.sum().abs() < 1e-12);
        let var = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-4);
    }
}
