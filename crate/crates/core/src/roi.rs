//! Region-of-interest selection from target label maps.
//!
//! Boxes are always computed from the *target* label and then applied to
//! both the target and the prediction. They are a training-time device
//! only; inference sees the whole image.

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiMode {
    Static,
    Dynamic,
}

impl std::fmt::Display for RoiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RoiMode::Static => "static",
            RoiMode::Dynamic => "dynamic",
        })
    }
}

impl std::str::FromStr for RoiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(RoiMode::Static),
            "dynamic" => Ok(RoiMode::Dynamic),
            other => Err(Error::Config(format!(
                "roi.mode must be static or dynamic, got '{other}'"
            ))),
        }
    }
}

/// Axis-aligned rectangle `[row0, row0+height) × [col0, col0+width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoiBox {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
    pub mode: RoiMode,
}

impl RoiBox {
    pub fn row_end(&self) -> usize {
        self.row0 + self.height
    }

    pub fn col_end(&self) -> usize {
        self.col0 + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row_end()).contains(&row) && (self.col0..self.col_end()).contains(&col)
    }

    pub fn fits(&self, dims: (usize, usize)) -> bool {
        self.height >= 1 && self.width >= 1 && self.row_end() <= dims.0 && self.col_end() <= dims.1
    }

    /// The whole-image box.
    pub fn full(dims: (usize, usize), mode: RoiMode) -> Self {
        Self {
            row0: 0,
            col0: 0,
            height: dims.0,
            width: dims.1,
            mode,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub mode: RoiMode,
    pub static_dims: (usize, usize),
    pub margin: usize,
    pub min_size: usize,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self::promise12()
    }
}

impl RoiConfig {
    /// Static 50×50 window used for the prostate data.
    pub fn promise12() -> Self {
        Self {
            mode: RoiMode::Static,
            static_dims: (50, 50),
            margin: 8,
            min_size: 16,
        }
    }

    /// Static 60×60 window used for the cardiac data.
    pub fn acdc() -> Self {
        Self {
            static_dims: (60, 60),
            ..Self::promise12()
        }
    }

    pub fn validate(&self, image_dims: (usize, usize)) -> Result<()> {
        let (h, w) = image_dims;
        match self.mode {
            RoiMode::Static => {
                let (sh, sw) = self.static_dims;
                if sh == 0 || sw == 0 || sh > h || sw > w {
                    return Err(Error::Config(format!(
                        "static ROI {sh}x{sw} must be non-empty and fit a {h}x{w} image"
                    )));
                }
            }
            RoiMode::Dynamic => {
                if self.min_size == 0 || self.min_size > h || self.min_size > w {
                    return Err(Error::Config(format!(
                        "roi.min_size {} must be in [1, {}]",
                        self.min_size,
                        h.min(w)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Applies the configured selection policy to a target label map.
    pub fn select(&self, label: &Array2<u8>) -> Result<RoiBox> {
        match self.mode {
            RoiMode::Static => extract_static_roi(label, self.static_dims),
            RoiMode::Dynamic => extract_dynamic_roi(label, self.margin, self.min_size),
        }
    }
}

fn foreground_pixels(label: &Array2<u8>) -> impl Iterator<Item = (usize, usize)> + '_ {
    label
        .indexed_iter()
        .filter(|(_, &v)| v > 0)
        .map(|(idx, _)| idx)
}

/// Places `len` cells starting at `center - len/2`, shifted to lie in `[0, n)`.
fn place(center: usize, len: usize, n: usize) -> usize {
    center.saturating_sub(len / 2).min(n - len)
}

/// Fixed-size box centered (rounded down) on the foreground centroid,
/// translated to fit inside the image; image center when there is no
/// foreground.
pub fn extract_static_roi(label: &Array2<u8>, dims: (usize, usize)) -> Result<RoiBox> {
    let (h, w) = label.dim();
    let (bh, bw) = dims;
    if bh == 0 || bw == 0 || bh > h || bw > w {
        return Err(Error::Contract(format!(
            "static ROI {bh}x{bw} does not fit a {h}x{w} label"
        )));
    }
    let (mut sr, mut sc, mut n) = (0usize, 0usize, 0usize);
    for (r, c) in foreground_pixels(label) {
        sr += r;
        sc += c;
        n += 1;
    }
    let (cr, cc) = if n == 0 { (h / 2, w / 2) } else { (sr / n, sc / n) };
    Ok(RoiBox {
        row0: place(cr, bh, h),
        col0: place(cc, bw, w),
        height: bh,
        width: bw,
        mode: RoiMode::Static,
    })
}

/// Grows `[lo, hi)` symmetrically to at least `min` cells within `[0, n)`.
fn grow(lo: usize, hi: usize, min: usize, n: usize) -> (usize, usize) {
    let len = hi - lo;
    if len >= min {
        return (lo, hi);
    }
    let need = min - len;
    let lo = lo.saturating_sub(need / 2);
    let lo = lo.min(n - min);
    (lo, lo + min)
}

/// Tight box around all foreground (any class > 0), padded by `margin`,
/// clipped to the image, then widened to at least `min_size` per side.
pub fn extract_dynamic_roi(label: &Array2<u8>, margin: usize, min_size: usize) -> Result<RoiBox> {
    let (h, w) = label.dim();
    if min_size == 0 || min_size > h || min_size > w {
        return Err(Error::Contract(format!(
            "min_size {min_size} does not fit a {h}x{w} label"
        )));
    }
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for (r, c) in foreground_pixels(label) {
        bounds = Some(match bounds {
            None => (r, r, c, c),
            Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
        });
    }
    let Some((r0, r1, c0, c1)) = bounds else {
        return Ok(RoiBox {
            row0: place(h / 2, min_size, h),
            col0: place(w / 2, min_size, w),
            height: min_size,
            width: min_size,
            mode: RoiMode::Dynamic,
        });
    };
    let rows = grow(r0.saturating_sub(margin), (r1 + 1 + margin).min(h), min_size, h);
    let cols = grow(c0.saturating_sub(margin), (c1 + 1 + margin).min(w), min_size, w);
    Ok(RoiBox {
        row0: rows.0,
        col0: cols.0,
        height: rows.1 - rows.0,
        width: cols.1 - cols.0,
        mode: RoiMode::Dynamic,
    })
}

fn check_bounds(roi: &RoiBox, dims: (usize, usize)) -> Result<()> {
    if roi.fits(dims) {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "ROI rows [{}, {}) cols [{}, {}) outside a {}x{} map",
            roi.row0,
            roi.row_end(),
            roi.col0,
            roi.col_end(),
            dims.0,
            dims.1
        )))
    }
}

/// Sub-grid copy of a 2D map.
pub fn crop<A: Clone>(map: &Array2<A>, roi: &RoiBox) -> Result<Array2<A>> {
    check_bounds(roi, map.dim())?;
    Ok(map
        .slice(s![roi.row0..roi.row_end(), roi.col0..roi.col_end()])
        .to_owned())
}

/// Channel-wise sub-grid copy of a (C, H, W) map.
pub fn crop_channels<A: Clone>(map: &Array3<A>, roi: &RoiBox) -> Result<Array3<A>> {
    let (_, h, w) = map.dim();
    check_bounds(roi, (h, w))?;
    Ok(map
        .slice(s![.., roi.row0..roi.row_end(), roi.col0..roi.col_end()])
        .to_owned())
}

/// Adjoint of [`crop_channels`]: writes `grad` into a zero map of `dims`.
pub fn uncrop_channels<A: Clone + num_traits::Zero>(
    grad: &Array3<A>,
    roi: &RoiBox,
    dims: (usize, usize),
) -> Result<Array3<A>> {
    check_bounds(roi, dims)?;
    let (c, bh, bw) = grad.dim();
    if (bh, bw) != (roi.height, roi.width) {
        return Err(Error::shape((roi.height, roi.width), (bh, bw)));
    }
    let mut out = Array3::zeros((c, dims.0, dims.1));
    out.slice_mut(s![.., roi.row0..roi.row_end(), roi.col0..roi.col_end()])
        .assign(grad);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_with(h: usize, w: usize, fg: &[(usize, usize)]) -> Array2<u8> {
        let mut l = Array2::zeros((h, w));
        for &p in fg {
            l[p] = 1;
        }
        l
    }

    #[test]
    fn dataset_static_dims() {
        assert_eq!(RoiConfig::promise12().static_dims, (50, 50));
        assert_eq!(RoiConfig::acdc().static_dims, (60, 60));
    }

    #[test]
    fn static_empty_label_centers_box() {
        let b = extract_static_roi(&Array2::zeros((128, 128)), (50, 50)).unwrap();
        assert_eq!((b.row0, b.row_end(), b.col0, b.col_end()), (39, 89, 39, 89));
    }

    #[test]
    fn static_box_near_corner_is_translated_inside() {
        let l = label_with(128, 128, &[(3, 4)]);
        let b = extract_static_roi(&l, (50, 50)).unwrap();
        assert_eq!((b.row0, b.col0, b.height, b.width), (0, 0, 50, 50));
        assert!(b.contains(3, 4));
    }

    #[test]
    fn static_box_near_far_edge_keeps_size() {
        let l = label_with(64, 64, &[(63, 62)]);
        let b = extract_static_roi(&l, (24, 24)).unwrap();
        assert_eq!((b.row0, b.col0, b.height, b.width), (40, 40, 24, 24));
    }

    #[test]
    fn static_rejects_oversized_box() {
        assert!(extract_static_roi(&Array2::zeros((32, 32)), (33, 10)).is_err());
    }

    #[test]
    fn dynamic_single_pixel_with_margin() {
        let l = label_with(128, 128, &[(3, 4)]);
        let b = extract_dynamic_roi(&l, 2, 1).unwrap();
        assert_eq!((b.row0, b.row_end(), b.col0, b.col_end()), (1, 6, 2, 7));
    }

    #[test]
    fn dynamic_full_foreground_is_whole_image() {
        let l = Array2::from_elem((20, 30), 2u8);
        let b = extract_dynamic_roi(&l, 0, 1).unwrap();
        assert_eq!(b, RoiBox::full((20, 30), RoiMode::Dynamic));
    }

    #[test]
    fn dynamic_empty_label_centered_min_box() {
        let b = extract_dynamic_roi(&Array2::zeros((64, 64)), 8, 16).unwrap();
        assert_eq!((b.row0, b.row_end(), b.col0, b.col_end()), (24, 40, 24, 40));
    }

    #[test]
    fn dynamic_grows_to_min_size_at_edge() {
        let l = label_with(64, 64, &[(0, 63)]);
        let b = extract_dynamic_roi(&l, 1, 16).unwrap();
        assert_eq!((b.height, b.width), (16, 16));
        assert!(b.fits((64, 64)));
        assert!(b.contains(0, 63));
    }

    #[test]
    fn crop_inner_window() {
        let m = Array2::from_shape_fn((4, 4), |(r, c)| r * 4 + c);
        let b = RoiBox {
            row0: 1,
            col0: 1,
            height: 2,
            width: 2,
            mode: RoiMode::Static,
        };
        let c = crop(&m, &b).unwrap();
        assert_eq!(c, ndarray::arr2(&[[5, 6], [9, 10]]));
    }

    #[test]
    fn crop_identity_box() {
        let m = Array2::from_shape_fn((3, 5), |(r, c)| (r * 7 + c) as u8);
        assert_eq!(crop(&m, &RoiBox::full((3, 5), RoiMode::Static)).unwrap(), m);
    }

    #[test]
    fn crop_out_of_bounds_is_contract_error() {
        let m = Array2::<u8>::zeros((4, 4));
        let b = RoiBox {
            row0: 3,
            col0: 0,
            height: 2,
            width: 2,
            mode: RoiMode::Static,
        };
        assert!(matches!(crop(&m, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn crop_of_one_hot_stays_one_hot() {
        let label = Array2::from_shape_fn((6, 6), |(r, c)| ((r + c) % 3) as u8);
        let onehot = Array3::from_shape_fn((3, 6, 6), |(k, r, c)| {
            if label[[r, c]] as usize == k { 1.0 } else { 0.0 }
        });
        let b = RoiBox {
            row0: 2,
            col0: 1,
            height: 3,
            width: 4,
            mode: RoiMode::Dynamic,
        };
        let cropped = crop_channels(&onehot, &b).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                let s: f64 = (0..3).map(|k| cropped[[k, r, c]]).sum();
                assert_eq!(s, 1.0);
            }
        }
    }

    #[test]
    fn uncrop_is_adjoint_of_crop() {
        let b = RoiBox {
            row0: 1,
            col0: 2,
            height: 2,
            width: 3,
            mode: RoiMode::Static,
        };
        let x = Array3::from_shape_fn((2, 5, 6), |(k, r, c)| (k * 31 + r * 7 + c) as f64);
        let g = Array3::from_shape_fn((2, 2, 3), |(k, r, c)| (k + r + c) as f64 * 0.5);
        let lhs = (&crop_channels(&x, &b).unwrap() * &g).sum();
        let rhs = (&x * &uncrop_channels(&g, &b, (5, 6)).unwrap()).sum();
        assert_eq!(lhs, rhs);
    }
}
