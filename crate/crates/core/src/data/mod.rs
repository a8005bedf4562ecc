//! Samples, datasets, on-disk format, preprocessing and synthetic data.

mod io;
mod preprocess;
mod split;
mod synth;

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_dataset, write_dataset, write_sample, SampleFormat, SampleMeta};
pub use preprocess::{
    center_crop_or_pad, crop_offsets, preprocess_acdc, preprocess_promise12, Volume,
    ACDC_CLASSES, ACDC_SIZE, PROMISE12_SIZE,
};
pub use split::{split_by_record, Record};
pub use synth::{class_intensity, generate_synthetic, SynthConfig, BACKGROUND_INTENSITY};

/// Integer class map, one entry per pixel.
pub type LabelMap = Array2<u8>;

/// One 2D grayscale image with its label map.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub image: Array2<f32>,
    pub label: LabelMap,
}

impl ImageSample {
    pub fn dims(&self) -> (usize, usize) {
        self.image.dim()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let fail = |reason: String| Error::Validation {
            id: self.id.clone(),
            reason,
        };
        if self.image.dim() != self.label.dim() {
            return Err(fail(format!(
                "image shape {:?} differs from label shape {:?}",
                self.image.dim(),
                self.label.dim()
            )));
        }
        if let Some(v) = self.image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(fail(format!("intensity {v} outside [0, 1]")));
        }
        if let Some(v) = self.label.iter().find(|&&v| v as usize >= num_classes) {
            return Err(fail(format!("label value {v} not below {num_classes} classes")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Promise12,
    Acdc,
    Synthetic,
    Generic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<ImageSample>,
    pub val: Vec<ImageSample>,
    pub num_classes: usize,
    pub provenance: Provenance,
}

impl DatasetSplit {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        for s in self.train.iter().chain(&self.val) {
            s.validate(self.num_classes)?;
        }
        let train_ids: HashSet<&str> = self.train.iter().map(|s| s.id.as_str()).collect();
        if let Some(s) = self.val.iter().find(|s| train_ids.contains(s.id.as_str())) {
            return Err(Error::Validation {
                id: s.id.clone(),
                reason: "id appears in both train and val".into(),
            });
        }
        Ok(())
    }

    /// Spatial size shared by all samples, if any.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.train.iter().chain(&self.val).next().map(|s| s.dims())
    }
}

/// Per-class pixel frequencies over the train split; sums to one.
pub fn class_frequencies(split: &DatasetSplit) -> Result<Vec<f64>> {
    if split.train.is_empty() {
        return Err(Error::Config("class frequencies need a non-empty train split".into()));
    }
    let mut counts = vec![0u64; split.num_classes];
    for s in &split.train {
        for &v in s.label.iter() {
            counts[v as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: LabelMap) -> ImageSample {
        ImageSample {
            id: id.into(),
            image: Array2::zeros(label.dim()),
            label,
        }
    }

    fn split_of(train: Vec<ImageSample>, c: usize) -> DatasetSplit {
        DatasetSplit {
            train,
            val: vec![],
            num_classes: c,
            provenance: Provenance::Generic,
        }
    }

    #[test]
    fn frequencies_count_pixels() {
        let mut l = Array2::zeros((10, 10));
        l.slice_mut(ndarray::s![0..1, ..]).fill(1u8);
        let f = class_frequencies(&split_of(vec![sample("a", l.clone())], 2)).unwrap();
        assert_eq!(f, vec![0.9, 0.1]);
        let twice = class_frequencies(&split_of(vec![sample("a", l.clone()), sample("b", l)], 2)).unwrap();
        assert_eq!(twice, f);
    }

    #[test]
    fn all_background_frequencies() {
        let f = class_frequencies(&split_of(vec![sample("a", Array2::zeros((4, 4)))], 2)).unwrap();
        assert_eq!(f, vec![1.0, 0.0]);
    }

    #[test]
    fn frequencies_permute_with_class_relabeling() {
        let l = Array2::from_shape_fn((5, 7), |(r, c)| ((r * 3 + c) % 4) as u8);
        let perm = [2u8, 0, 3, 1];
        let relabeled = l.mapv(|v| perm[v as usize]);
        let f = class_frequencies(&split_of(vec![sample("a", l)], 4)).unwrap();
        let g = class_frequencies(&split_of(vec![sample("a", relabeled)], 4)).unwrap();
        for k in 0..4 {
            assert_eq!(f[k], g[perm[k] as usize]);
        }
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn overlapping_ids_rejected() {
        let mut s = split_of(vec![sample("a", Array2::zeros((2, 2)))], 2);
        s.val.push(sample("a", Array2::zeros((2, 2))));
        assert!(s.validate().is_err());
    }

    #[test]
    fn out_of_range_label_rejected() {
        let s = sample("x", Array2::from_elem((2, 2), 2u8));
        assert!(matches!(s.validate(2), Err(Error::Validation { id, .. }) if id == "x"));
    }
}
