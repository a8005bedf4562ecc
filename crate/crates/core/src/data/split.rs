use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetSplit, ImageSample, Provenance};
use crate::{Error, Result};

/// All slices of one patient or scan.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub id: String,
    pub samples: Vec<ImageSample>,
}

/// Splits whole records (never individual slices) into train and val.
///
/// The train part receives `round(ratio * n)` records, kept within
/// `[1, n-1]`. Samples in each part are ordered by id.
pub fn split_by_record(
    records: Vec<Record>,
    train_ratio: f64,
    seed: u64,
    num_classes: usize,
    provenance: Provenance,
) -> Result<DatasetSplit> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(format!("train_ratio {train_ratio} must lie in (0, 1)")));
    }
    let n = records.len();
    if n < 2 {
        return Err(Error::Config(format!("cannot split {n} record(s)")));
    }
    let mut records = records;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (rec, t) in records.into_iter().zip(is_train) {
        if t {
            train.extend(rec.samples);
        } else {
            val.extend(rec.samples);
        }
    }
    train.sort_by(|a, b| a.id.cmp(&b.id));
    val.sort_by(|a, b| a.id.cmp(&b.id));
    let split = DatasetSplit {
        train,
        val,
        num_classes,
        provenance,
    };
    split.validate()?;
    Ok(split)
}
