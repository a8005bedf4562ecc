use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Deserialize;

use super::{DatasetSplit, ImageSample, Provenance};
use crate::{Error, Result};

/// On-disk dataset layouts understood by [`load_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    /// `root/{train,val}/<id>.img|.lbl|.json`.
    SampleDir,
}

/// Contents of the `<id>.json` sidecar.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct SampleMeta {
    pub shape: [usize; 2],
    pub classes: usize,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn load_sample(dir: &Path, id: &str, num_classes: usize) -> Result<ImageSample> {
    let meta_path = dir.join(format!("{id}.json"));
    let meta: SampleMeta = serde_json::from_slice(&read(&meta_path)?).map_err(|e| Error::Load {
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;
    let [h, w] = meta.shape;
    let img_path = dir.join(format!("{id}.img"));
    let bytes = read(&img_path)?;
    if bytes.len() != h * w * 4 {
        return Err(Error::Load {
            path: img_path,
            reason: format!("expected {} bytes for {h}x{w} float32, found {}", h * w * 4, bytes.len()),
        });
    }
    let pixels: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let lbl_path = dir.join(format!("{id}.lbl"));
    let labels = read(&lbl_path)?;
    if labels.len() != h * w {
        return Err(Error::Load {
            path: lbl_path,
            reason: format!("expected {} bytes for {h}x{w} uint8, found {}", h * w, labels.len()),
        });
    }
    if meta.classes != num_classes {
        log::warn!(
            "{} declares {} classes, loading with {num_classes}",
            meta_path.display(),
            meta.classes
        );
    }
    let sample = ImageSample {
        id: id.to_string(),
        image: Array2::from_shape_vec((h, w), pixels).expect("length checked"),
        label: Array2::from_shape_vec((h, w), labels).expect("length checked"),
    };
    sample.validate(num_classes)?;
    Ok(sample)
}

fn load_part(dir: &Path, num_classes: usize) -> Result<Vec<ImageSample>> {
    if !dir.is_dir() {
        log::warn!("{} does not exist; treating it as empty", dir.display());
        return Ok(vec![]);
    }
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(String::from))
        .collect();
    ids.sort();
    if ids.is_empty() {
        log::warn!("{} contains no samples", dir.display());
    }
    ids.iter().map(|id| load_sample(dir, id, num_classes)).collect()
}

/// Reads a dataset, validating every sample; samples are ordered by id.
pub fn load_dataset(root: &Path, format: SampleFormat, num_classes: usize) -> Result<DatasetSplit> {
    let SampleFormat::SampleDir = format;
    if !root.is_dir() {
        return Err(Error::Load {
            path: root.to_path_buf(),
            reason: "dataset root is not a directory".into(),
        });
    }
    let split = DatasetSplit {
        train: load_part(&root.join("train"), num_classes)?,
        val: load_part(&root.join("val"), num_classes)?,
        num_classes,
        provenance: Provenance::Generic,
    };
    split.validate()?;
    Ok(split)
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<id>.img`, `<id>.lbl` and `<id>.json` into `dir`.
pub fn write_sample(dir: &Path, sample: &ImageSample, num_classes: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = sample.dims();
    let mut img = Vec::with_capacity(h * w * 4);
    for v in sample.image.iter() {
        img.extend_from_slice(&v.to_le_bytes());
    }
    write(dir.join(format!("{}.img", sample.id)), &img)?;
    let lbl: Vec<u8> = sample.label.iter().copied().collect();
    write(dir.join(format!("{}.lbl", sample.id)), &lbl)?;
    let meta = format!("{{\"shape\": [{h}, {w}], \"classes\": {num_classes}}}");
    write(dir.join(format!("{}.json", sample.id)), meta.as_bytes())
}

pub fn write_dataset(root: &Path, split: &DatasetSplit) -> Result<()> {
    for (part, samples) in [("train", &split.train), ("val", &split.val)] {
        let dir = root.join(part);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for s in samples {
            write_sample(&dir, s, split.num_classes)?;
        }
    }
    Ok(())
}
