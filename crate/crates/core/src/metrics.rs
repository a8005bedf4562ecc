//! Dice similarity and Hausdorff distance, per sample and per split.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ImageSample, LabelMap};
use crate::{Error, Result};

/// Anything that maps an image to a label map.
pub trait Segmenter {
    fn segment(&self, image: &Array2<f32>) -> Result<LabelMap>;
}

/// `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
pub fn dice_coefficient(pred: &Array2<bool>, target: &Array2<bool>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(target.dim(), pred.dim()));
    }
    let (mut inter, mut a, mut b) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(target.iter()) {
        a += p as usize;
        b += t as usize;
        inter += (p && t) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Foreground pixels with a background 4-neighbour or on the image edge.
pub fn boundary(mask: &Array2<bool>) -> Vec<(usize, usize)> {
    let (h, w) = mask.dim();
    mask.indexed_iter()
        .filter(|&((r, c), &v)| {
            v && (r == 0
                || c == 0
                || r == h - 1
                || c == w - 1
                || !mask[[r - 1, c]]
                || !mask[[r + 1, c]]
                || !mask[[r, c - 1]]
                || !mask[[r, c + 1]])
        })
        .map(|(idx, _)| idx)
        .collect()
}

/// Squared distance transform of a 1D sampled function (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[0]].is_infinite() {
            v[0] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else if s <= z[k] {
                // k == 0: q dominates p everywhere.
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = if f[p].is_infinite() {
            f64::INFINITY
        } else {
            let d = q as f64 - p as f64;
            d * d + f[p]
        };
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest `seed`.
fn squared_distance_map(dims: (usize, usize), seeds: &[(usize, usize)]) -> Array2<f64> {
    let (h, w) = dims;
    let mut grid = Array2::from_elem((h, w), f64::INFINITY);
    for &p in seeds {
        grid[p] = 0.0;
    }
    let n = h.max(w);
    let (mut v, mut z, mut col, mut out) = (vec![0; n], vec![0.0; n + 1], vec![0.0; n], vec![0.0; n]);
    for c in 0..w {
        for r in 0..h {
            col[r] = grid[[r, c]];
        }
        edt_1d(&col[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[[r, c]] = out[r];
        }
    }
    for r in 0..h {
        for c in 0..w {
            col[c] = grid[[r, c]];
        }
        edt_1d(&col[..w], &mut out[..w], &mut v, &mut z);
        for c in 0..w {
            grid[[r, c]] = out[c];
        }
    }
    grid
}

fn directed_distances<'a>(from: &'a [(usize, usize)], to_map: &'a Array2<f64>) -> impl Iterator<Item = f64> + 'a {
    from.iter().map(move |&p| to_map[p].sqrt())
}

/// Symmetric Hausdorff distance between mask boundaries, in pixels.
///
/// `percentile` = 100 gives the classical maximum; lower values take that
/// nearest-rank percentile of the pooled directed distances. Exactly one
/// empty mask yields the image diagonal; two empty masks yield 0.
pub fn hausdorff_distance_percentile(pred: &Array2<bool>, target: &Array2<bool>, percentile: f64) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(target.dim(), pred.dim()));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Config(format!("hd percentile {percentile} must lie in (0, 100]")));
    }
    let (h, w) = pred.dim();
    let a = boundary(pred);
    let b = boundary(target);
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(((h * h + w * w) as f64).sqrt()),
        _ => {}
    }
    let to_b = squared_distance_map((h, w), &b);
    let to_a = squared_distance_map((h, w), &a);
    if percentile >= 100.0 {
        let hab = directed_distances(&a, &to_b).fold(0.0, f64::max);
        let hba = directed_distances(&b, &to_a).fold(0.0, f64::max);
        return Ok(hab.max(hba));
    }
    let mut all: Vec<f64> = directed_distances(&a, &to_b).chain(directed_distances(&b, &to_a)).collect();
    all.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * all.len() as f64).ceil() as usize;
    Ok(all[rank.clamp(1, all.len()) - 1])
}

pub fn hausdorff_distance(pred: &Array2<bool>, target: &Array2<bool>) -> Result<f64> {
    hausdorff_distance_percentile(pred, target, 100.0)
}

/// Dataset-level Dice/HD over foreground classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_dice: Vec<f64>,
    pub per_class_hd: Vec<f64>,
    pub mean_dice: f64,
    pub mean_hd: f64,
    pub n_samples: usize,
    pub config_echo: BTreeMap<String, String>,
}

/// Per-sample, per-foreground-class metrics of one prediction.
pub fn sample_metrics(pred: &LabelMap, target: &LabelMap, num_classes: usize, hd_percentile: f64) -> Result<Vec<(f64, f64)>> {
    (1..num_classes)
        .map(|k| {
            let k = k as u8;
            let p = pred.mapv(|v| v == k);
            let t = target.mapv(|v| v == k);
            Ok((dice_coefficient(&p, &t)?, hausdorff_distance_percentile(&p, &t, hd_percentile)?))
        })
        .collect()
}

/// Aggregates `(dice, hd)` rows, one row of `C-1` entries per sample.
pub fn aggregate(rows: &[Vec<(f64, f64)>], num_classes: usize) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let k = num_classes - 1;
    let n = rows.len() as f64;
    let mut dice = vec![0.0; k];
    let mut hd = vec![0.0; k];
    for row in rows {
        for (c, (d, h)) in row.iter().enumerate() {
            dice[c] += d;
            hd[c] += h;
        }
    }
    dice.iter_mut().for_each(|v| *v /= n);
    hd.iter_mut().for_each(|v| *v /= n);
    Ok(MetricsReport {
        mean_dice: dice.iter().sum::<f64>() / k as f64,
        mean_hd: hd.iter().sum::<f64>() / k as f64,
        per_class_dice: dice,
        per_class_hd: hd,
        n_samples: rows.len(),
        config_echo: BTreeMap::new(),
    })
}

/// Segments every sample in order and reports mean Dice and HD.
pub fn evaluate_split<S: Segmenter + ?Sized>(
    model: &S,
    samples: &[ImageSample],
    num_classes: usize,
    hd_percentile: f64,
) -> Result<MetricsReport> {
    let rows = samples
        .iter()
        .map(|s| {
            let pred = model.segment(&s.image)?;
            if pred.dim() != s.label.dim() {
                return Err(Error::shape(s.label.dim(), pred.dim()));
            }
            sample_metrics(&pred, &s.label, num_classes, hd_percentile)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&rows, num_classes)
}
