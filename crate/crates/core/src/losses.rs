//! Segmentation and adversarial objectives.
//!
//! Every segmentation loss is evaluated on a [`ProbabilityMap`] and can
//! return its gradient with respect to the probabilities; training chains
//! that through the softmax with [`crate::nn::ops::softmax_backward`].

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::nn::ops::softmax_channels;
use crate::roi::{RoiBox, RoiMode};
use crate::{Error, Result, Scalar};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before any logarithm.
pub const EPS: f64 = 1e-7;
/// Smoothing constant of the soft Dice loss.
pub const DICE_SMOOTH: f64 = 1.0;
/// Largest allowed ratio between inverse-frequency class weights.
pub const MAX_WEIGHT_RATIO: f64 = 100.0;

const SUM_TOLERANCE: f64 = 1e-5;

/// Per-class probabilities of shape (C, H, W); channels sum to one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap<T> {
    values: Array3<T>,
}

impl<T: Scalar> ProbabilityMap<T> {
    pub fn new(values: Array3<T>) -> Result<Self> {
        let (c, h, w) = values.dim();
        if c < 2 {
            return Err(Error::Contract(format!(
                "probability map needs at least 2 channels, got {c}"
            )));
        }
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for k in 0..c {
                    let v = values[[k, y, x]].as_f64();
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Contract(format!(
                            "probability {v} at ({k}, {y}, {x}) outside [0, 1]"
                        )));
                    }
                    s += v;
                }
                if (s - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::Contract(format!(
                        "channel sum {s} at ({y}, {x}) is not 1"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn from_logits(logits: &Array3<T>) -> Self {
        Self {
            values: softmax_channels(logits),
        }
    }

    /// Exact one-hot encoding of a label map.
    pub fn one_hot(label: &Array2<u8>, num_classes: usize) -> Result<Self> {
        if let Some(bad) = label.iter().find(|&&v| v as usize >= num_classes) {
            return Err(Error::Contract(format!(
                "label value {bad} not below {num_classes} classes"
            )));
        }
        let (h, w) = label.dim();
        Ok(Self {
            values: Array3::from_shape_fn((num_classes, h, w), |(k, y, x)| {
                if label[[y, x]] as usize == k {
                    T::one()
                } else {
                    T::zero()
                }
            }),
        })
    }

    pub fn values(&self) -> &Array3<T> {
        &self.values
    }

    pub fn into_values(self) -> Array3<T> {
        self.values
    }

    pub fn num_classes(&self) -> usize {
        self.values.dim().0
    }

    pub fn dims(&self) -> (usize, usize) {
        let (_, h, w) = self.values.dim();
        (h, w)
    }

    /// Per-pixel argmax; ties resolve to the lowest class index.
    pub fn argmax(&self) -> Array2<u8> {
        let (c, h, w) = self.values.dim();
        Array2::from_shape_fn((h, w), |(y, x)| {
            let mut best = 0;
            for k in 1..c {
                if self.values[[k, y, x]] > self.values[[best, y, x]] {
                    best = k;
                }
            }
            best as u8
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Wce,
    Dice,
    Focal,
    Context,
}

macro_rules! str_enum {
    ($ty:ty, $key:literal, $($variant:path => $name:literal),+) => {
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        concat!($key, " has no value '{}'"), other
                    ))),
                }
            }
        }
    };
}

str_enum!(Reduction, "loss.reduction", Reduction::Sum => "sum", Reduction::Mean => "mean");
str_enum!(LossKind, "loss.kind",
    LossKind::Ce => "ce", LossKind::Wce => "wce", LossKind::Dice => "dice",
    LossKind::Focal => "focal", LossKind::Context => "context");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda_local: f64,
    pub lambda_adv: f64,
    pub reduction: Reduction,
    pub focal_gamma: f64,
    pub class_weights: Option<Vec<f64>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Ce,
            lambda_local: 1.0,
            lambda_adv: 1.0,
            reduction: Reduction::Mean,
            focal_gamma: 2.0,
            class_weights: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_local >= 0.0 && self.lambda_local.is_finite()) {
            return Err(Error::Config("loss.lambda_local must be >= 0".into()));
        }
        if !(self.lambda_adv >= 0.0 && self.lambda_adv.is_finite()) {
            return Err(Error::Config("loss.lambda_adv must be >= 0".into()));
        }
        if !(self.focal_gamma >= 0.0 && self.focal_gamma.is_finite()) {
            return Err(Error::Config("loss.focal_gamma must be >= 0".into()));
        }
        if let Some(w) = &self.class_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("loss.class_weights must be positive".into()));
            }
        }
        Ok(())
    }
}

fn check_target<T: Scalar>(pred: &ProbabilityMap<T>, target: &Array2<u8>) -> Result<()> {
    if pred.dims() != target.dim() {
        return Err(Error::shape(pred.dims(), target.dim()));
    }
    let c = pred.num_classes();
    if let Some(bad) = target.iter().find(|&&v| v as usize >= c) {
        return Err(Error::Contract(format!("target class {bad} not below {c}")));
    }
    Ok(())
}

/// Shared pixel-wise kernel: `-Σ w_t (1-p_t)^γ ln p_t` over `region`.
///
/// With `gamma == None` the modulating factor is exactly one. Gradients
/// (d/dp, scaled by `scale`) are accumulated into `grad` when present.
fn pixel_ce<T: Scalar>(
    pred: &ProbabilityMap<T>,
    target: &Array2<u8>,
    region: &RoiBox,
    weights: Option<&[T]>,
    gamma: Option<T>,
    reduction: Reduction,
    scale: T,
    mut grad: Option<&mut Array3<T>>,
) -> T {
    let eps = T::lit(EPS);
    let hi = T::one() - eps;
    let norm = match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / T::lit(region.area() as f64),
    };
    let p = pred.values();
    let mut total = T::zero();
    for y in region.row0..region.row_end() {
        for x in region.col0..region.col_end() {
            let t = target[[y, x]] as usize;
            let raw = p[[t, y, x]];
            let clamped = raw < eps || raw > hi;
            let pt = raw.max(eps).min(hi);
            let w = weights.map_or(T::one(), |w| w[t]);
            let ln = pt.ln();
            let (term, dterm) = match gamma {
                None => (-w * ln, -w / pt),
                Some(g) => {
                    let q = T::one() - pt;
                    let mod_ = q.powf(g);
                    let dmod = if g == T::zero() {
                        T::zero()
                    } else {
                        -g * q.powf(g - T::one())
                    };
                    (-w * mod_ * ln, -w * (dmod * ln + mod_ / pt))
                }
            };
            total += term;
            if let Some(g) = grad.as_deref_mut() {
                if !clamped {
                    g[[t, y, x]] += scale * norm * dterm;
                }
            }
        }
    }
    total * norm
}

fn whole(pred_dims: (usize, usize)) -> RoiBox {
    RoiBox::full(pred_dims, RoiMode::Static)
}

fn region_or_whole(region: Option<&RoiBox>, dims: (usize, usize)) -> Result<RoiBox> {
    match region {
        None => Ok(whole(dims)),
        Some(r) if r.fits(dims) => Ok(*r),
        Some(r) => Err(Error::Contract(format!(
            "loss region {r:?} outside a {}x{} map",
            dims.0, dims.1
        ))),
    }
}

fn check_weights<T: Scalar>(weights: Option<&[T]>, c: usize) -> Result<()> {
    match weights {
        Some(w) if w.len() != c => Err(Error::shape(c, w.len())),
        _ => Ok(()),
    }
}

/// Cross-entropy over the whole image or over `region`, optionally class-weighted.
pub fn cross_entropy<T: Scalar>(
    pred: &ProbabilityMap<T>,
    target: &Array2<u8>,
    region: Option<&RoiBox>,
    weights: Option<&[T]>,
    reduction: Reduction,
) -> Result<T> {
    check_target(pred, target)?;
    check_weights(weights, pred.num_classes())?;
    let r = region_or_whole(region, pred.dims())?;
    Ok(pixel_ce(pred, target, &r, weights, None, reduction, T::one(), None))
}

/// Global cross-entropy plus `lambda_local` times the cross-entropy inside `roi`.
pub fn context_ce<T: Scalar>(
    pred: &ProbabilityMap<T>,
    target: &Array2<u8>,
    roi: &RoiBox,
    lambda_local: T,
    reduction: Reduction,
) -> Result<T> {
    let global = cross_entropy(pred, target, None, None, reduction)?;
    let local = cross_entropy(pred, target, Some(roi), None, reduction)?;
    Ok(global + lambda_local * local)
}

pub fn weighted_ce<T: Scalar>(
    pred: &ProbabilityMap<T>,
    target: &Array2<u8>,
    class_weights: &[T],
    reduction: Reduction,
) -> Result<T> {
    cross_entropy(pred, target, None, Some(class_weights), reduction)
}

pub fn focal_loss<T: Scalar>(
    pred: &ProbabilityMap<T>,
    target: &Array2<u8>,
    gamma: T,
    reduction: Reduction,
) -> Result<T> {
    check_target(pred, target)?;
    if gamma < T::zero() {
        return Err(Error::Contract("focal gamma must be >= 0".into()));
    }
    let r = whole(pred.dims());
    Ok(pixel_ce(pred, target, &r, None, Some(gamma), reduction, T::one(), None))
}

/// Soft Dice loss on foreground classes, with optional gradient (d/dp).
fn dice_impl<T: Scalar>(
    pred: &ProbabilityMap<T>,
    target: &Array2<u8>,
    mut grad: Option<&mut Array3<T>>,
) -> T {
    let p = pred.values();
    let (c, h, w) = p.dim();
    let s = T::lit(DICE_SMOOTH);
    let two = T::lit(2.0);
    let nfg = T::lit((c - 1) as f64);
    let mut mean_dice = T::zero();
    for k in 1..c {
        let (mut inter, mut psum, mut ysum) = (T::zero(), T::zero(), T::zero());
        for y in 0..h {
            for x in 0..w {
                let pv = p[[k, y, x]];
                psum += pv;
                if target[[y, x]] as usize == k {
                    inter += pv;
                    ysum += T::one();
                }
            }
        }
        let num = two * inter + s;
        let den = psum + ysum + s;
        mean_dice += num / den / nfg;
        if let Some(g) = grad.as_deref_mut() {
            for y in 0..h {
                for x in 0..w {
                    let yv = if target[[y, x]] as usize == k { T::one() } else { T::zero() };
                    let dd = (two * yv * den - num) / (den * den);
                    g[[k, y, x]] -= dd / nfg;
                }
            }
        }
    }
    T::one() - mean_dice
}

/// `1 − mean_c (2Σp·y + s)/(Σp + Σy + s)` over foreground classes.
pub fn dice_loss<T: Scalar>(pred: &ProbabilityMap<T>, target: &Array2<u8>) -> Result<T> {
    check_target(pred, target)?;
    Ok(dice_impl(pred, target, None))
}

fn clamp_score<T: Scalar>(s: T) -> T {
    let eps = T::lit(EPS);
    s.max(eps).min(T::one() - eps)
}

fn batch_mean<T: Scalar>(xs: impl ExactSizeIterator<Item = T>) -> T {
    let n = xs.len();
    if n == 0 {
        return T::zero();
    }
    xs.sum::<T>() / T::lit(n as f64)
}

/// Negated two-sided GAN objective for the discriminator, batch-averaged:
/// `−ln D(real) − ln(1 − D(fake))`.
pub fn discriminator_loss<T: Scalar>(scores_real: &[T], scores_fake: &[T]) -> Result<T> {
    if scores_real.len() != scores_fake.len() {
        return Err(Error::shape(scores_real.len(), scores_fake.len()));
    }
    Ok(batch_mean(
        scores_real
            .iter()
            .zip(scores_fake)
            .map(|(r, f)| -clamp_score(*r).ln() - (T::one() - clamp_score(*f)).ln()),
    ))
}

/// Non-saturating generator term `−ln D(G(x))`, batch-averaged.
pub fn generator_adversarial_loss<T: Scalar>(scores_fake: &[T]) -> T {
    batch_mean(scores_fake.iter().map(|f| -clamp_score(*f).ln()))
}

/// Per-pixel mean multi-class cross-entropy plus `lambda_adv` times the
/// adversarial generator term.
pub fn seg_glgan_generator_loss<T: Scalar>(
    pred: &ProbabilityMap<T>,
    target: &Array2<u8>,
    score_fake: T,
    lambda_adv: T,
) -> Result<T> {
    let mce = cross_entropy(pred, target, None, None, Reduction::Mean)?;
    Ok(mce + lambda_adv * generator_adversarial_loss(&[score_fake]))
}

/// d/dz of `−ln σ(z)` expressed through `s = σ(z)`.
pub fn real_logit_grad<T: Scalar>(score: T) -> T {
    score - T::one()
}

/// d/dz of `−ln(1 − σ(z))` expressed through `s = σ(z)`.
pub fn fake_logit_grad<T: Scalar>(score: T) -> T {
    score
}

/// Inverse-frequency weights: capped at [`MAX_WEIGHT_RATIO`] times the
/// smallest weight, then normalized to mean one.
pub fn inverse_frequency_weights(frequencies: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = frequencies
        .iter()
        .map(|&f| if f > 0.0 { 1.0 / f } else { f64::INFINITY })
        .collect();
    if frequencies.iter().any(|&f| f <= 0.0) {
        log::warn!("class with zero frequency; its weight is clamped");
    }
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let min = if min.is_finite() { min } else { 1.0 };
    let capped: Vec<f64> = raw.iter().map(|w| w.min(min * MAX_WEIGHT_RATIO)).collect();
    let mean = capped.iter().sum::<f64>() / capped.len() as f64;
    capped.iter().map(|w| w / mean).collect()
}

/// Loss value, named components, and d(loss)/d(probabilities).
#[derive(Clone, Debug)]
pub struct LossTerms<T> {
    pub total: T,
    pub components: Vec<(&'static str, T)>,
    pub grad: Array3<T>,
}

/// A configured segmentation objective ready to evaluate with gradients.
#[derive(Clone, Debug)]
pub struct SegmentationObjective<T> {
    kind: LossKind,
    lambda_local: T,
    reduction: Reduction,
    gamma: T,
    weights: Option<Vec<T>>,
}

impl<T: Scalar> SegmentationObjective<T> {
    /// `class_weights` is required for `wce` unless the config carries fixed weights.
    pub fn new(config: &LossConfig, class_weights: Option<&[f64]>) -> Result<Self> {
        config.validate()?;
        let weights = match config.kind {
            LossKind::Wce => {
                let w = config
                    .class_weights
                    .as_deref()
                    .or(class_weights)
                    .ok_or_else(|| Error::Config("wce needs class weights".into()))?;
                Some(w.iter().map(|v| T::lit(*v)).collect())
            }
            _ => None,
        };
        Ok(Self {
            kind: config.kind,
            lambda_local: T::lit(config.lambda_local),
            reduction: config.reduction,
            gamma: T::lit(config.focal_gamma),
            weights,
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn uses_roi(&self) -> bool {
        self.kind == LossKind::Context
    }

    pub fn evaluate(
        &self,
        pred: &ProbabilityMap<T>,
        target: &Array2<u8>,
        roi: Option<&RoiBox>,
    ) -> Result<LossTerms<T>> {
        check_target(pred, target)?;
        let dims = pred.dims();
        let mut grad = Array3::<T>::zeros(pred.values().dim());
        let full = whole(dims);
        let one = T::one();
        let (total, components) = match self.kind {
            LossKind::Ce => {
                let v = pixel_ce(pred, target, &full, None, None, self.reduction, one, Some(&mut grad));
                (v, vec![("ce", v)])
            }
            LossKind::Wce => {
                let w = self.weights.as_deref();
                check_weights(w, pred.num_classes())?;
                let v = pixel_ce(pred, target, &full, w, None, self.reduction, one, Some(&mut grad));
                (v, vec![("wce", v)])
            }
            LossKind::Focal => {
                let v = pixel_ce(
                    pred,
                    target,
                    &full,
                    None,
                    Some(self.gamma),
                    self.reduction,
                    one,
                    Some(&mut grad),
                );
                (v, vec![("focal", v)])
            }
            LossKind::Dice => {
                let v = dice_impl(pred, target, Some(&mut grad));
                (v, vec![("dice", v)])
            }
            LossKind::Context => {
                let roi = roi.ok_or_else(|| Error::Contract("context loss needs an ROI".into()))?;
                let roi = region_or_whole(Some(roi), dims)?;
                let g = pixel_ce(pred, target, &full, None, None, self.reduction, one, Some(&mut grad));
                let l = pixel_ce(
                    pred,
                    target,
                    &roi,
                    None,
                    None,
                    self.reduction,
                    self.lambda_local,
                    Some(&mut grad),
                );
                (g + self.lambda_local * l, vec![("global", g), ("local", l)])
            }
        };
        Ok(LossTerms {
            total,
            components,
            grad,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn two_by_two() -> (ProbabilityMap<f64>, Array2<u8>) {
        let fg = arr2(&[[0.8, 0.3], [0.4, 0.1]]);
        let values = Array3::from_shape_fn((2, 2, 2), |(k, y, x)| {
            if k == 1 { fg[[y, x]] } else { 1.0 - fg[[y, x]] }
        });
        let target = arr2(&[[1u8, 0], [0, 0]]);
        (ProbabilityMap::new(values).unwrap(), target)
    }

    fn pixel(row0: usize, col0: usize) -> RoiBox {
        RoiBox {
            row0,
            col0,
            height: 1,
            width: 1,
            mode: RoiMode::Static,
        }
    }

    #[test]
    fn ce_two_by_two_hand_value() {
        let (p, t) = two_by_two();
        let expected = -(0.8f64.ln() + 0.7f64.ln() + 0.6f64.ln() + 0.9f64.ln());
        let v = cross_entropy(&p, &t, None, None, Reduction::Sum).unwrap();
        assert!((v - expected).abs() < 1e-12);
        let mean = cross_entropy(&p, &t, None, None, Reduction::Mean).unwrap();
        assert!((mean * 4.0 - expected).abs() < 1e-12);
    }

    #[test]
    fn ce_single_pixel_region() {
        let (p, t) = two_by_two();
        let v = cross_entropy(&p, &t, Some(&pixel(0, 0)), None, Reduction::Sum).unwrap();
        assert!((v + 0.8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn context_ce_with_unit_lambda() {
        let (p, t) = two_by_two();
        let global = -(0.8f64.ln() + 0.7f64.ln() + 0.6f64.ln() + 0.9f64.ln());
        let v = context_ce(&p, &t, &pixel(0, 0), 1.0, Reduction::Sum).unwrap();
        assert!((v - (global - 0.8f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let t = arr2(&[[0u8, 1, 2], [2, 1, 0]]);
        let p = ProbabilityMap::<f64>::one_hot(&t, 3).unwrap();
        let v = cross_entropy(&p, &t, None, None, Reduction::Sum).unwrap();
        assert!(v >= 0.0 && v <= 3.0 * 6.0 * EPS);
        assert!(dice_loss(&p, &t).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dice_uniform_half_foreground() {
        // Σp·y = 1, Σp = 2, Σy = 2: (2 + 1) / (4 + 1) = 0.6.
        let t = arr2(&[[1u8, 1], [0, 0]]);
        let p = ProbabilityMap::new(Array3::from_elem((2, 2, 2), 0.5f64)).unwrap();
        assert!((dice_loss(&p, &t).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn dice_without_overlap_is_near_one() {
        let t = Array2::from_shape_fn((8, 8), |(r, _)| u8::from(r < 4));
        let p = ProbabilityMap::<f64>::one_hot(&Array2::zeros((8, 8)), 2).unwrap();
        // Only the smoothing term survives: 1 / (32 + 1).
        assert!((dice_loss(&p, &t).unwrap() - (1.0 - 1.0 / 33.0)).abs() < 1e-12);
    }

    #[test]
    fn focal_suppresses_easy_pixel() {
        let t = arr2(&[[1u8]]);
        let p = ProbabilityMap::new(Array3::from_shape_vec((2, 1, 1), vec![0.01, 0.99]).unwrap()).unwrap();
        let ce = cross_entropy(&p, &t, None, None, Reduction::Sum).unwrap();
        let fl = focal_loss(&p, &t, 2.0, Reduction::Sum).unwrap();
        assert!((fl - 0.01f64.powi(2) * -(0.99f64.ln())).abs() < 1e-15);
        assert!((fl / ce - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn weights_from_frequencies() {
        // 1/0.9 and 1/0.1 normalized to mean one.
        let w = inverse_frequency_weights(&[0.9, 0.1]);
        let a = 1.0 / 0.9;
        let b = 10.0;
        let m = (a + b) / 2.0;
        assert!((w[0] - a / m).abs() < 1e-12 && (w[1] - b / m).abs() < 1e-12);
    }

    #[test]
    fn zero_frequency_weight_is_capped() {
        let w = inverse_frequency_weights(&[1.0, 0.0]);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w[1] / w[0] - MAX_WEIGHT_RATIO).abs() < 1e-9);
        assert!(((w[0] + w[1]) / 2.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_weights_doubles_loss() {
        let (p, t) = two_by_two();
        let a = weighted_ce(&p, &t, &[0.3, 1.7], Reduction::Sum).unwrap();
        let b = weighted_ce(&p, &t, &[0.6, 3.4], Reduction::Sum).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn adversarial_fixed_points() {
        let d = discriminator_loss(&[0.5f64], &[0.5]).unwrap();
        assert!((d - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let g = generator_adversarial_loss(&[0.5f64]);
        assert!((g - std::f64::consts::LN_2).abs() < 1e-12);
        let perfect = discriminator_loss(&[1.0f64], &[0.0]).unwrap();
        assert!(perfect < 1e-6);
        assert!(generator_adversarial_loss(&[1.0f64]) < 1e-6);
    }

    #[test]
    fn discriminator_loss_symmetry() {
        let a = discriminator_loss(&[0.7f64, 0.2], &[0.4, 0.9]).unwrap();
        let b = discriminator_loss(&[0.6f64, 0.1], &[0.3, 0.8]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_collapses_without_adversary() {
        let (p, t) = two_by_two();
        let mce = cross_entropy(&p, &t, None, None, Reduction::Mean).unwrap();
        let v = seg_glgan_generator_loss(&p, &t, 0.3, 0.0).unwrap();
        assert_eq!(v, mce);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let (p, _) = two_by_two();
        let t = Array2::<u8>::zeros((3, 2));
        assert!(matches!(
            cross_entropy(&p, &t, None, None, Reduction::Sum),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn probability_map_rejects_bad_sums() {
        let v = Array3::from_elem((2, 1, 1), 0.6f64);
        assert!(ProbabilityMap::new(v).is_err());
    }

    #[test]
    fn wce_objective_requires_weights() {
        let cfg = LossConfig {
            kind: LossKind::Wce,
            ..Default::default()
        };
        assert!(SegmentationObjective::<f64>::new(&cfg, None).is_err());
        assert!(SegmentationObjective::<f64>::new(&cfg, Some(&[0.5, 1.5])).is_ok());
    }
}
