//! Volume-to-slice preprocessing for the prostate and cardiac datasets.

use ndarray::{s, Array2, Array3, Axis};

use super::ImageSample;
use crate::{Error, Result};

/// In-plane size of prostate slices after preprocessing.
pub const PROMISE12_SIZE: (usize, usize) = (128, 128);
/// In-plane size of cardiac slices after preprocessing.
pub const ACDC_SIZE: (usize, usize) = (160, 160);
/// Background, right ventricle, myocardium, left ventricle.
pub const ACDC_CLASSES: usize = 4;

/// A 3D scan indexed `[slice, row, col]` with its label volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub id: String,
    pub image: Array3<f32>,
    pub label: Array3<u8>,
    /// Voxel size in mm along (col, row, slice), i.e. (x, y, z).
    pub spacing: (f64, f64, f64),
}

impl Volume {
    fn check(&self) -> Result<()> {
        if self.image.is_empty() {
            return Err(Error::Contract(format!("volume {} is empty", self.id)));
        }
        if self.image.dim() != self.label.dim() {
            return Err(Error::Validation {
                id: self.id.clone(),
                reason: format!(
                    "image {:?} and label {:?} volumes differ",
                    self.image.dim(),
                    self.label.dim()
                ),
            });
        }
        let (sx, sy, sz) = self.spacing;
        if !(sx > 0.0 && sy > 0.0 && sz > 0.0) {
            return Err(Error::Contract(format!("spacing {:?} must be positive", self.spacing)));
        }
        Ok(())
    }
}

/// Source coordinate of output index `i` when resizing `n` cells to `m`.
fn source_coord(i: usize, n: usize, m: usize) -> f64 {
    ((i as f64 + 0.5) * n as f64 / m as f64 - 0.5).clamp(0.0, (n - 1) as f64)
}

fn resampled_len(n: usize, spacing_mm: f64) -> usize {
    ((n as f64 * spacing_mm).round() as usize).max(1)
}

fn resample_axis_linear(v: &Array3<f32>, axis: usize, m: usize) -> Array3<f32> {
    let n = v.len_of(Axis(axis));
    if n == m {
        return v.clone();
    }
    let mut dim = v.raw_dim();
    dim[axis] = m;
    let mut out = Array3::<f32>::zeros(dim);
    for i in 0..m {
        let src = source_coord(i, n, m);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        let w1 = (src - i0 as f64) as f32;
        let a = v.index_axis(Axis(axis), i0);
        let b = v.index_axis(Axis(axis), i1);
        let mut dst = out.index_axis_mut(Axis(axis), i);
        ndarray::Zip::from(&mut dst)
            .and(&a)
            .and(&b)
            .for_each(|d, a, b| *d = a * (1.0 - w1) + b * w1);
    }
    out
}

fn resample_axis_nearest(v: &Array3<u8>, axis: usize, m: usize) -> Array3<u8> {
    let n = v.len_of(Axis(axis));
    if n == m {
        return v.clone();
    }
    let mut dim = v.raw_dim();
    dim[axis] = m;
    let mut out = Array3::<u8>::zeros(dim);
    for i in 0..m {
        let src = (source_coord(i, n, m) + 0.5).floor() as usize;
        out.index_axis_mut(Axis(axis), i)
            .assign(&v.index_axis(Axis(axis), src.min(n - 1)));
    }
    out
}

/// Resamples to 1 mm isotropic: trilinear for intensities, nearest for labels.
fn resample_isotropic(vol: &Volume) -> (Array3<f32>, Array3<u8>) {
    let (sx, sy, sz) = vol.spacing;
    let (d, h, w) = vol.image.dim();
    let target = [resampled_len(d, sz), resampled_len(h, sy), resampled_len(w, sx)];
    let mut img = vol.image.clone();
    let mut lbl = vol.label.clone();
    for (axis, &m) in target.iter().enumerate() {
        img = resample_axis_linear(&img, axis, m);
        lbl = resample_axis_nearest(&lbl, axis, m);
    }
    (img, lbl)
}

/// Per-volume min–max scaling into [0, 1]; constant volumes map to zero.
fn normalize(img: &mut Array3<f32>, id: &str) {
    let min = img.iter().cloned().fold(f32::INFINITY, f32::min);
    let max = img.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    if max > min {
        let range = max - min;
        img.mapv_inplace(|v| ((v - min) / range).clamp(0.0, 1.0));
    } else {
        log::warn!("volume {id} has constant intensity; normalized to zeros");
        img.fill(0.0);
    }
}

/// `(source start, destination start, length)` for centering `n` cells in `target`.
pub fn crop_offsets(n: usize, target: usize) -> (usize, usize, usize) {
    if n >= target {
        ((n - target) / 2, 0, target)
    } else {
        (0, (target - n) / 2, n)
    }
}

/// Center crop, or symmetric zero-pad, to `dims`.
pub fn center_crop_or_pad<A: Clone + num_traits::Zero>(map: &Array2<A>, dims: (usize, usize)) -> Array2<A> {
    let (h, w) = map.dim();
    let (sr, dr, lr) = crop_offsets(h, dims.0);
    let (sc, dc, lc) = crop_offsets(w, dims.1);
    let mut out = Array2::zeros(dims);
    out.slice_mut(s![dr..dr + lr, dc..dc + lc])
        .assign(&map.slice(s![sr..sr + lr, sc..sc + lc]));
    out
}

fn slices_to_samples(
    id: &str,
    img: &Array3<f32>,
    lbl: &Array3<u8>,
    dims: (usize, usize),
    num_classes: usize,
) -> Result<Vec<ImageSample>> {
    let mut out = Vec::with_capacity(img.dim().0);
    for z in 0..img.dim().0 {
        let sample = ImageSample {
            id: format!("{id}_s{z:03}"),
            image: center_crop_or_pad(&img.index_axis(Axis(0), z).to_owned(), dims),
            label: center_crop_or_pad(&lbl.index_axis(Axis(0), z).to_owned(), dims),
        };
        sample.validate(num_classes)?;
        out.push(sample);
    }
    Ok(out)
}

/// 1 mm isotropic resampling, per-volume normalization, 128×128 center
/// crop/pad; one binary-labelled sample per axial slice.
pub fn preprocess_promise12(vol: &Volume) -> Result<Vec<ImageSample>> {
    vol.check()?;
    let (mut img, lbl) = resample_isotropic(vol);
    normalize(&mut img, &vol.id);
    slices_to_samples(&vol.id, &img, &lbl, PROMISE12_SIZE, 2)
}

/// Per-volume normalization and 160×160 center crop/pad, no resampling;
/// four-class labels.
pub fn preprocess_acdc(vol: &Volume) -> Result<Vec<ImageSample>> {
    vol.check()?;
    let mut img = vol.image.clone();
    normalize(&mut img, &vol.id);
    slices_to_samples(&vol.id, &img, &vol.label, ACDC_SIZE, ACDC_CLASSES)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(d: usize, h: usize, w: usize, spacing: (f64, f64, f64)) -> Volume {
        Volume {
            id: "v".into(),
            image: Array3::from_shape_fn((d, h, w), |(z, y, x)| (z * 3 + y + 2 * x) as f32),
            label: Array3::from_shape_fn((d, h, w), |(_, y, x)| {
                u8::from((h / 2).abs_diff(y) < 6 && (w / 2).abs_diff(x) < 6)
            }),
            spacing,
        }
    }

    #[test]
    fn promise12_slices_are_128() {
        for (h, w, sp) in [(140, 140, (1.0, 1.0, 1.0)), (60, 90, (0.6, 0.6, 3.0)), (200, 100, (1.4, 0.8, 1.0))] {
            let out = preprocess_promise12(&volume(3, h, w, sp)).unwrap();
            assert!(!out.is_empty());
            assert!(out.iter().all(|s| s.dims() == (128, 128)));
        }
    }

    #[test]
    fn acdc_slices_are_160() {
        let out = preprocess_acdc(&volume(2, 170, 150, (1.5, 1.5, 10.0))).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|s| s.dims() == (160, 160)));
    }

    #[test]
    fn crop_offsets_by_hand() {
        assert_eq!(crop_offsets(140, 128), (6, 0, 128));
        assert_eq!(crop_offsets(150, 160), (0, 5, 150));
    }

    #[test]
    fn padding_is_symmetric() {
        let m = Array2::from_elem((150, 150), 1u8);
        let p = center_crop_or_pad(&m, (160, 160));
        assert_eq!(p[[4, 80]], 0);
        assert_eq!(p[[5, 80]], 1);
        assert_eq!(p[[154, 80]], 1);
        assert_eq!(p[[155, 80]], 0);
        assert_eq!(p.iter().filter(|&&v| v == 1).count(), 150 * 150);
    }

    #[test]
    fn isotropic_128_input_is_only_rescaled() {
        let v = volume(2, 128, 128, (1.0, 1.0, 1.0));
        let out = preprocess_promise12(&v).unwrap();
        let (min, max) = (0.0f32, (3 + 127 + 254) as f32);
        for (z, s) in out.iter().enumerate() {
            assert_eq!(s.label, v.label.index_axis(Axis(0), z));
            for ((y, x), val) in s.image.indexed_iter() {
                let expect = (v.image[[z, y, x]] - min) / (max - min);
                assert!((val - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn crop_keeps_labels_inside_window() {
        let mut v = volume(1, 170, 170, (1.0, 1.0, 1.0));
        v.label.fill(0);
        for (k, (y, x)) in [(1u8, (80, 80)), (2, (85, 90)), (3, (70, 100))] {
            v.label[[0, y, x]] = k;
        }
        let out = preprocess_acdc(&v).unwrap();
        let mut classes: Vec<u8> = out[0].label.iter().copied().filter(|&c| c > 0).collect();
        classes.sort();
        assert_eq!(classes, [1, 2, 3]);
        assert_eq!(out[0].label[[75, 75]], 1);
    }

    #[test]
    fn idempotent_on_conformant_output() {
        let v = volume(3, 100, 110, (1.0, 1.0, 1.0));
        let once = preprocess_promise12(&v).unwrap();
        let stacked = Volume {
            id: "v".into(),
            image: ndarray::stack(Axis(0), &once.iter().map(|s| s.image.view()).collect::<Vec<_>>()).unwrap(),
            label: ndarray::stack(Axis(0), &once.iter().map(|s| s.label.view()).collect::<Vec<_>>()).unwrap(),
            spacing: (1.0, 1.0, 1.0),
        };
        let twice = preprocess_promise12(&stacked).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(a.label, b.label);
            assert!(a.image.iter().zip(b.image.iter()).all(|(x, y)| (x - y).abs() <= 1e-6));
        }
    }

    #[test]
    fn anisotropic_spacing_changes_slice_count() {
        let out = preprocess_promise12(&volume(4, 64, 64, (1.0, 1.0, 2.5))).unwrap();
        assert_eq!(out.len(), 10);
    }

    #[test]
    fn constant_volume_maps_to_zero() {
        let mut v = volume(1, 128, 128, (1.0, 1.0, 1.0));
        v.image.fill(7.0);
        let out = preprocess_promise12(&v).unwrap();
        assert!(out[0].image.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(preprocess_promise12(&volume(1, 8, 8, (0.0, 1.0, 1.0))).is_err());
    }
}
