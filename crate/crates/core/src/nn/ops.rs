//! Parameter-free tensor operations with their adjoints.

use ndarray::{s, Array1, Array3, Axis, Dimension, Zip};
use ndarray::{Array, ArrayBase, Data};

use crate::Scalar;

pub fn relu<T: Scalar, D: Dimension>(x: Array<T, D>) -> Array<T, D> {
    x.mapv_into(|v| if v > T::zero() { v } else { T::zero() })
}

/// `output` is the forward result of [`relu`].
pub fn relu_backward<T: Scalar, D: Dimension>(output: &Array<T, D>, grad: Array<T, D>) -> Array<T, D> {
    let mut g = grad;
    Zip::from(&mut g).and(output).for_each(|g, y| {
        if *y <= T::zero() {
            *g = T::zero();
        }
    });
    g
}

pub fn leaky_relu<T: Scalar, D: Dimension>(x: Array<T, D>, slope: T) -> Array<T, D> {
    x.mapv_into(|v| if v > T::zero() { v } else { v * slope })
}

/// `output` is the forward result; for slope > 0 its sign equals the input sign.
pub fn leaky_relu_backward<T: Scalar, D: Dimension>(
    output: &Array<T, D>,
    grad: Array<T, D>,
    slope: T,
) -> Array<T, D> {
    let mut g = grad;
    Zip::from(&mut g).and(output).for_each(|g, y| {
        if *y <= T::zero() {
            *g *= slope;
        }
    });
    g
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// 2×2 max pooling with stride 2. Requires even spatial dims.
pub fn max_pool2<T: Scalar>(x: &Array3<T>) -> (Array3<T>, Vec<u8>) {
    let (c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "max_pool2 needs even dims, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::<T>::zeros((c, oh, ow));
    let mut arg = vec![0u8; c * oh * ow];
    let mut i = 0;
    for ci in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = x[[ci, 2 * y, 2 * xx]];
                let mut which = 0u8;
                for (k, (dy, dx)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = x[[ci, 2 * y + dy, 2 * xx + dx]];
                    if v > best {
                        best = v;
                        which = k as u8 + 1;
                    }
                }
                out[[ci, y, xx]] = best;
                arg[i] = which;
                i += 1;
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward<T: Scalar>(grad: &Array3<T>, arg: &[u8]) -> Array3<T> {
    let (c, oh, ow) = grad.dim();
    let mut dx = Array3::<T>::zeros((c, oh * 2, ow * 2));
    let mut i = 0;
    for ci in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let (dy, dxo) = match arg[i] {
                    0 => (0, 0),
                    1 => (0, 1),
                    2 => (1, 0),
                    _ => (1, 1),
                };
                dx[[ci, 2 * y + dy, 2 * xx + dxo]] = grad[[ci, y, xx]];
                i += 1;
            }
        }
    }
    dx
}

/// 2×2 average pooling, stride 2; odd trailing rows/cols are dropped.
pub fn avg_pool2<T: Scalar>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::lit(0.25);
    Array3::from_shape_fn((c, oh, ow), |(ci, y, xx)| {
        (x[[ci, 2 * y, 2 * xx]]
            + x[[ci, 2 * y, 2 * xx + 1]]
            + x[[ci, 2 * y + 1, 2 * xx]]
            + x[[ci, 2 * y + 1, 2 * xx + 1]])
            * quarter
    })
}

pub fn avg_pool2_backward<T: Scalar>(grad: &Array3<T>, input_dims: (usize, usize)) -> Array3<T> {
    let (c, oh, ow) = grad.dim();
    let mut dx = Array3::<T>::zeros((c, input_dims.0, input_dims.1));
    let quarter = T::lit(0.25);
    for ci in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let g = grad[[ci, y, xx]] * quarter;
                dx[[ci, 2 * y, 2 * xx]] = g;
                dx[[ci, 2 * y, 2 * xx + 1]] = g;
                dx[[ci, 2 * y + 1, 2 * xx]] = g;
                dx[[ci, 2 * y + 1, 2 * xx + 1]] = g;
            }
        }
    }
    dx
}

/// Source taps for ×2 bilinear upsampling (half-pixel centers, edge clamp).
fn upsample_taps<T: Scalar>(n: usize) -> Vec<(usize, usize, T, T)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let w1 = src - i0 as f64;
            (i0, i1, T::lit(1.0 - w1), T::lit(w1))
        })
        .collect()
}

pub fn upsample2_bilinear<T: Scalar>(x: &Array3<T>) -> Array3<T> {
    let (c, h, w) = x.dim();
    let ty = upsample_taps::<T>(h);
    let tx = upsample_taps::<T>(w);
    let mut out = Array3::<T>::zeros((c, 2 * h, 2 * w));
    for ci in 0..c {
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                out[[ci, oy, ox]] = wy0 * (wx0 * x[[ci, y0, x0]] + wx1 * x[[ci, y0, x1]])
                    + wy1 * (wx0 * x[[ci, y1, x0]] + wx1 * x[[ci, y1, x1]]);
            }
        }
    }
    out
}

pub fn upsample2_bilinear_backward<T: Scalar>(grad: &Array3<T>) -> Array3<T> {
    let (c, oh, ow) = grad.dim();
    let (h, w) = (oh / 2, ow / 2);
    let ty = upsample_taps::<T>(h);
    let tx = upsample_taps::<T>(w);
    let mut dx = Array3::<T>::zeros((c, h, w));
    for ci in 0..c {
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let g = grad[[ci, oy, ox]];
                dx[[ci, y0, x0]] += g * wy0 * wx0;
                dx[[ci, y0, x1]] += g * wy0 * wx1;
                dx[[ci, y1, x0]] += g * wy1 * wx0;
                dx[[ci, y1, x1]] += g * wy1 * wx1;
            }
        }
    }
    dx
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Array3<T>, b: &Array3<T>) -> Array3<T> {
    ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("matching spatial dims")
}

pub fn split_channels<T: Scalar>(g: &Array3<T>, first: usize) -> (Array3<T>, Array3<T>) {
    (
        g.slice(s![..first, .., ..]).to_owned(),
        g.slice(s![first.., .., ..]).to_owned(),
    )
}

/// Mean over spatial positions, one value per channel.
pub fn global_avg_pool<T: Scalar>(x: &Array3<T>) -> Array1<T> {
    let n = T::lit((x.dim().1 * x.dim().2) as f64);
    x.axis_iter(Axis(0)).map(|p| p.sum() / n).collect()
}

pub fn global_avg_pool_backward<T: Scalar>(grad: &Array1<T>, dims: (usize, usize, usize)) -> Array3<T> {
    let n = T::lit((dims.1 * dims.2) as f64);
    Array3::from_shape_fn(dims, |(c, _, _)| grad[c] / n)
}

/// Numerically stable softmax over the channel axis.
pub fn softmax_channels<T: Scalar, S: Data<Elem = T>>(logits: &ArrayBase<S, ndarray::Ix3>) -> Array3<T> {
    let (c, h, w) = logits.dim();
    let mut out = Array3::<T>::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            let mut m = T::neg_infinity();
            for ci in 0..c {
                m = m.max(logits[[ci, y, x]]);
            }
            let mut z = T::zero();
            for ci in 0..c {
                let e = (logits[[ci, y, x]] - m).exp();
                out[[ci, y, x]] = e;
                z += e;
            }
            for ci in 0..c {
                out[[ci, y, x]] /= z;
            }
        }
    }
    out
}

/// Chains d(loss)/d(probabilities) back to the logits.
pub fn softmax_backward<T: Scalar>(probs: &Array3<T>, grad: &Array3<T>) -> Array3<T> {
    let (c, h, w) = probs.dim();
    let mut out = Array3::<T>::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            let mut dot = T::zero();
            for ci in 0..c {
                dot += probs[[ci, y, x]] * grad[[ci, y, x]];
            }
            for ci in 0..c {
                out[[ci, y, x]] = probs[[ci, y, x]] * (grad[[ci, y, x]] - dot);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_adjoint(
        forward: impl Fn(&Array3<f64>) -> Array3<f64>,
        backward: impl Fn(&Array3<f64>) -> Array3<f64>,
        in_dims: (usize, usize, usize),
    ) {
        // <f(x), g> == <x, f*(g)> for a linear operator f.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array3::from_shape_fn(in_dims, |_| rng.random::<f64>() - 0.5);
        let y = forward(&x);
        let g = Array3::from_shape_fn(y.dim(), |_| rng.random::<f64>() - 0.5);
        let lhs = (&y * &g).sum();
        let rhs = (&x * &backward(&g)).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn upsample_is_adjoint_consistent() {
        check_adjoint(upsample2_bilinear, upsample2_bilinear_backward, (2, 3, 5));
    }

    #[test]
    fn avg_pool_is_adjoint_consistent_with_odd_dims() {
        check_adjoint(avg_pool2, |g| avg_pool2_backward(g, (7, 5)), (2, 7, 5));
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let x = Array3::from_elem((1, 3, 3), 2.5f64);
        assert!(upsample2_bilinear(&x).iter().all(|v| (*v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backward_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = Array3::from_shape_fn((4, 2, 3), |_| 3.0 * (rng.random::<f64>() - 0.5));
        let p = softmax_channels(&z);
        for y in 0..2 {
            for x in 0..3 {
                let s: f64 = (0..4).map(|c| p[[c, y, x]]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let g = Array3::from_shape_fn((4, 2, 3), |_| rng.random::<f64>());
        let dz = softmax_backward(&p, &g);
        let f = |z: &Array3<f64>| (&softmax_channels(z) * &g).sum();
        let h = 1e-6;
        let mut zp = z.clone();
        zp[[2, 1, 1]] += h;
        let mut zm = z.clone();
        zm[[2, 1, 1]] -= h;
        let num = (f(&zp) - f(&zm)) / (2.0 * h);
        assert!((num - dz[[2, 1, 1]]).abs() < 1e-8);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let x = Array3::from_shape_vec((1, 2, 2), vec![1.0, 5.0, 2.0, 3.0]).unwrap();
        let (y, arg) = max_pool2(&x);
        assert_eq!(y[[0, 0, 0]], 5.0);
        let g = Array3::from_elem((1, 1, 1), 1.0);
        let dx = max_pool2_backward(&g, &arg);
        assert_eq!(dx.as_slice().unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
