use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{class_intensity, LabelMap};
use crate::metrics::Segmenter;
use crate::{Error, Result};

/// Labels a pixel by how many ascending intensity thresholds it reaches.
///
/// Carries no trainable state. On noise-free synthetic images the
/// midpoints between class intensities recover the labels exactly, which
/// makes it a ground-truth fixture for the evaluation pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSegmenter {
    pub thresholds: Vec<f32>,
}

impl ThresholdSegmenter {
    pub fn new(thresholds: Vec<f32>) -> Result<Self> {
        if thresholds.is_empty() || thresholds.len() > 254 {
            return Err(Error::Config("threshold segmenter needs 1..=254 thresholds".into()));
        }
        if thresholds.windows(2).any(|w| !(w[0] < w[1])) || thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("thresholds must be finite and strictly ascending".into()));
        }
        Ok(Self { thresholds })
    }

    /// Midpoints between the synthetic class intensities.
    pub fn for_synthetic(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        let t = (1..num_classes)
            .map(|c| 0.5 * (class_intensity(c - 1, num_classes) + class_intensity(c, num_classes)))
            .collect();
        Self::new(t)
    }

    pub fn num_classes(&self) -> usize {
        self.thresholds.len() + 1
    }
}

impl Segmenter for ThresholdSegmenter {
    fn segment(&self, image: &Array2<f32>) -> Result<LabelMap> {
        Ok(image.mapv(|v| self.thresholds.iter().filter(|&&t| v >= t).count() as u8))
    }
}
