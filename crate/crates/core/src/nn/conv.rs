use ndarray::{linalg::general_mat_mul, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use super::param::{leaf, leaf_mut, Param, Parameterized};
use crate::Scalar;

/// Square-kernel 2D convolution, stride 1, `same` zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

/// Unfolded input kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    col: Array2<T>,
    height: usize,
    width: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        Self {
            weight: Param::normal(&[out_channels, in_channels, kernel, kernel], init_std, rng),
            bias: Param::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn weight_view(&self) -> ArrayView2<'_, T> {
        let k2 = self.kernel * self.kernel;
        ArrayView2::from_shape((self.out_channels, self.in_channels * k2), &self.weight.data)
            .expect("weight shape")
    }

    pub fn forward(&self, x: &Array3<T>) -> (Array3<T>, ConvCache<T>) {
        let (c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channels");
        let col = im2col(x, self.kernel);
        let mut out = self.weight_view().dot(&col);
        for (mut row, b) in out.axis_iter_mut(Axis(0)).zip(&self.bias.data) {
            row.mapv_inplace(|v| v + *b);
        }
        let out = out
            .into_shape_with_order((self.out_channels, h, w))
            .expect("conv output shape");
        (
            out,
            ConvCache {
                col,
                height: h,
                width: w,
            },
        )
    }

    /// Accumulates parameter gradients into `grads`; returns the input
    /// gradient when `want_input` is set.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        grad_out: &Array3<T>,
        grads: &mut Self,
        want_input: bool,
    ) -> Option<Array3<T>> {
        let hw = cache.height * cache.width;
        let g = grad_out
            .view()
            .into_shape_with_order((self.out_channels, hw))
            .expect("grad shape");
        {
            let k2 = self.kernel * self.kernel;
            let mut dw = ArrayViewMut2::from_shape(
                (self.out_channels, self.in_channels * k2),
                &mut grads.weight.data,
            )
            .expect("weight grad shape");
            general_mat_mul(T::one(), &g, &cache.col.t(), T::one(), &mut dw);
        }
        for (db, row) in grads.bias.data.iter_mut().zip(g.axis_iter(Axis(0))) {
            *db += row.sum();
        }
        if !want_input {
            return None;
        }
        let dcol = self.weight_view().t().dot(&g);
        Some(col2im(
            &dcol,
            self.in_channels,
            cache.height,
            cache.width,
            self.kernel,
        ))
    }
}

impl<T: Scalar> Parameterized<T> for Conv2d<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        leaf(prefix, "weight", &self.weight, out);
        leaf(prefix, "bias", &self.bias, out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        leaf_mut(prefix, "weight", &mut self.weight, out);
        leaf_mut(prefix, "bias", &mut self.bias, out);
    }
}

/// Rows are ordered (channel, ky, kx); columns are output pixels.
fn im2col<T: Scalar>(x: &Array3<T>, k: usize) -> Array2<T> {
    let (c, h, w) = x.dim();
    let pad = (k / 2) as isize;
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let mut col = Array2::<T>::zeros((c * k * k, h * w));
    let dst = col.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let out = &mut dst[row * h * w..(row + 1) * h * w];
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let s0 = (sy * w) as isize + x_lo as isize + dx;
                    let s0 = s0 as usize;
                    out[y * w + x_lo..y * w + x_hi]
                        .copy_from_slice(&plane[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(col: &Array2<T>, c: usize, h: usize, w: usize, k: usize) -> Array3<T> {
    let pad = (k / 2) as isize;
    let col = col.as_standard_layout();
    let src = col.as_slice().expect("standard layout");
    let mut x = Array3::<T>::zeros((c, h, w));
    let dst = x.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let inp = &src[row * h * w..(row + 1) * h * w];
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (sy as usize * w) as isize + x_lo as isize + dx;
                    let s0 = s0 as usize;
                    let n = x_hi - x_lo;
                    for (d, v) in plane[s0..s0 + n]
                        .iter_mut()
                        .zip(&inp[y * w + x_lo..y * w + x_hi])
                    {
                        *d += *v;
                    }
                }
            }
        }
    }
    x
}
