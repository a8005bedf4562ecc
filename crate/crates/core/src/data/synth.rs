//! Synthetic small-object datasets with severe class imbalance.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, ImageSample, Provenance};
use crate::{Error, Result};

/// Intensity of background pixels before noise.
pub const BACKGROUND_INTENSITY: f32 = 0.2;
const OBJECT_SPAN: f64 = 0.6;
const MAX_ATTEMPTS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub image_size: (usize, usize),
    pub num_classes: usize,
    /// Semi-axis bounds of each ellipse, in pixels.
    pub object_radius_range: (f64, f64),
    pub foreground_fraction_target: f64,
    pub noise_sigma: f64,
    pub count_train: usize,
    pub count_val: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: (64, 64),
            num_classes: 2,
            object_radius_range: (3.0, 12.0),
            foreground_fraction_target: 0.03,
            noise_sigma: 0.1,
            count_train: 200,
            count_val: 50,
            seed: 0,
        }
    }
}

/// Noise-free intensity of pixels labelled `class`.
pub fn class_intensity(class: usize, num_classes: usize) -> f32 {
    if class == 0 {
        BACKGROUND_INTENSITY
    } else {
        (BACKGROUND_INTENSITY as f64 + OBJECT_SPAN * class as f64 / (num_classes - 1) as f64) as f32
    }
}

impl SynthConfig {
    fn objects_range(&self) -> (usize, usize) {
        let fg = self.num_classes - 1;
        if fg == 1 { (1, 2) } else { (fg, fg) }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        let (rmin, rmax) = self.object_radius_range;
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 || self.num_classes > 255 {
            return bad(format!("synth.num_classes {} must be in [2, 255]", self.num_classes));
        }
        if !(rmin > 0.0 && rmin <= rmax) {
            return bad(format!("radius range ({rmin}, {rmax}) must be positive and ordered"));
        }
        if self.count_train == 0 || self.count_val == 0 {
            return bad("synth counts must be positive".into());
        }
        let f = self.foreground_fraction_target;
        if !(f > 0.0 && f <= 0.2) {
            return bad(format!("foreground fraction {f} must lie in (0, 0.2]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0".into());
        }
        if 2.0 * rmax + 3.0 > h.min(w) as f64 {
            return bad(format!("radius {rmax} does not fit a {h}x{w} image"));
        }
        let target = f * (h * w) as f64;
        let (kmin, kmax) = self.objects_range();
        if PI * rmax * rmax * (kmax as f64) < 0.5 * target {
            return bad(format!("radius {rmax} too small to cover fraction {f}"));
        }
        if PI * rmin * rmin * (kmin as f64) > 1.5 * target {
            return bad(format!("radius {rmin} too large for fraction {f}"));
        }
        Ok(())
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ra: f64,
    rb: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn contains(&self, y: usize, x: usize) -> bool {
        let dy = y as f64 - self.cy;
        let dx = x as f64 - self.cx;
        let u = (dx * self.cos + dy * self.sin) / self.ra;
        let v = (-dx * self.sin + dy * self.cos) / self.rb;
        u * u + v * v <= 1.0
    }

    fn extent(&self) -> f64 {
        self.ra.max(self.rb)
    }
}

fn draw_label(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<Array2<u8>> {
    let (h, w) = cfg.image_size;
    let (rmin, rmax) = cfg.object_radius_range;
    let (kmin, kmax) = cfg.objects_range();
    let k = rng.random_range(kmin..=kmax);
    let target = cfg.foreground_fraction_target * (h * w) as f64;
    let mut label = Array2::<u8>::zeros((h, w));
    for j in 0..k {
        let class = if cfg.num_classes == 2 { 1 } else { (j % (cfg.num_classes - 1)) + 1 } as u8;
        let area = target * rng.random_range(0.8..1.2) / k as f64;
        let aspect: f64 = rng.random_range(0.6..1.6);
        let ra = (area * aspect / PI).sqrt().clamp(rmin, rmax);
        let rb = (area / (aspect * PI)).sqrt().clamp(rmin, rmax);
        let theta: f64 = rng.random_range(0.0..PI);
        let mut placed = false;
        for _ in 0..50 {
            let r = ra.max(rb);
            let cy = rng.random_range(r + 1.0..h as f64 - r - 2.0);
            let cx = rng.random_range(r + 1.0..w as f64 - r - 2.0);
            let e = Ellipse {
                cy,
                cx,
                ra,
                rb,
                cos: theta.cos(),
                sin: theta.sin(),
            };
            let (y0, y1) = ((cy - e.extent()).floor().max(0.0) as usize, ((cy + e.extent()).ceil() as usize).min(h - 1));
            let (x0, x1) = ((cx - e.extent()).floor().max(0.0) as usize, ((cx + e.extent()).ceil() as usize).min(w - 1));
            let inside: Vec<(usize, usize)> = (y0..=y1)
                .flat_map(|y| (x0..=x1).map(move |x| (y, x)))
                .filter(|&(y, x)| e.contains(y, x))
                .collect();
            // Keep a one-pixel gap between objects.
            let clash = inside.iter().any(|&(y, x)| {
                (y.saturating_sub(1)..=(y + 1).min(h - 1))
                    .any(|yy| (x.saturating_sub(1)..=(x + 1).min(w - 1)).any(|xx| label[[yy, xx]] != 0))
            });
            if clash || inside.is_empty() {
                continue;
            }
            for (y, x) in inside {
                label[[y, x]] = class;
            }
            placed = true;
            break;
        }
        if !placed {
            return None;
        }
    }
    let fg = label.iter().filter(|&&v| v > 0).count() as f64 / (h * w) as f64;
    let f = cfg.foreground_fraction_target;
    (fg >= 0.5 * f && fg <= 1.5 * f).then_some(label)
}

fn draw_sample(cfg: &SynthConfig, id: String, rng: &mut ChaCha8Rng) -> Result<ImageSample> {
    let label = (0..MAX_ATTEMPTS)
        .find_map(|_| draw_label(cfg, rng))
        .ok_or_else(|| {
            Error::Config(format!(
                "could not place objects for {id} within the configured geometry"
            ))
        })?;
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("sigma checked"));
    let image = label.mapv(|c| {
        let base = class_intensity(c as usize, cfg.num_classes) as f64;
        let v = match &noise {
            Some(n) => (base + n.sample(rng)).clamp(0.0, 1.0),
            None => base,
        };
        v as f32
    });
    Ok(ImageSample { id, image, label })
}

/// Gaussian-noise background with bright elliptical objects; fully
/// determined by the config (including its seed).
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    let make = |part: &str, count: usize, stream: u64| -> Result<Vec<ImageSample>> {
        (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(stream + i as u64);
                draw_sample(cfg, format!("synth_{part}_{i:04}"), &mut rng)
            })
            .collect()
    };
    let train = make("train", cfg.count_train, 0)?;
    let val = make("val", cfg.count_val, 1 << 32)?;
    Ok(DatasetSplit {
        train,
        val,
        num_classes: cfg.num_classes,
        provenance: Provenance::Synthetic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fraction(s: &ImageSample) -> f64 {
        s.label.iter().filter(|&&v| v > 0).count() as f64 / s.label.len() as f64
    }

    #[test]
    fn mean_foreground_fraction_near_target() {
        let cfg = SynthConfig {
            count_train: 100,
            count_val: 1,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let mean = d.train.iter().map(fraction).sum::<f64>() / 100.0;
        assert!((0.015..=0.045).contains(&mean), "mean fraction {mean}");
        assert!(d.train.iter().all(|s| (0.015..=0.045).contains(&fraction(s))));
    }

    #[test]
    fn noise_free_background_is_exact() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            count_train: 5,
            count_val: 2,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        for s in d.train.iter().chain(&d.val) {
            for (l, v) in s.label.iter().zip(s.image.iter()) {
                if *l == 0 {
                    assert_eq!(*v, BACKGROUND_INTENSITY);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig {
            count_train: 10,
            count_val: 3,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn multiclass_labels_in_range() {
        let cfg = SynthConfig {
            num_classes: 4,
            foreground_fraction_target: 0.05,
            count_train: 10,
            count_val: 2,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        d.validate().unwrap();
        let mut seen = [false; 4];
        for s in &d.train {
            for &v in s.label.iter() {
                seen[v as usize] = true;
            }
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn oversized_radius_is_config_error() {
        let cfg = SynthConfig {
            object_radius_range: (3.0, 40.0),
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_count_is_config_error() {
        let cfg = SynthConfig {
            count_train: 0,
            ..Default::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }
}
