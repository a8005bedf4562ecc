//! Contour overlays of targets and predictions on input images.

use std::fs;
use std::path::Path;

use anyhow::Context;
use ctxseg::data::LabelMap;
use ctxseg::metrics::{boundary, Segmenter};
use image::{Rgb, RgbImage};
use serde_json::json;

use crate::commands::{check_dims, load_checkpoint, load_part};

pub const TARGET_COLOR: (&str, [u8; 3]) = ("yellow", [255, 255, 0]);
/// Colors of successive checkpoints: red, green, blue, then extras.
pub const PREDICTION_COLORS: [(&str, [u8; 3]); 6] = [
    ("red", [255, 0, 0]),
    ("green", [0, 255, 0]),
    ("blue", [0, 0, 255]),
    ("magenta", [255, 0, 255]),
    ("cyan", [0, 255, 255]),
    ("orange", [255, 128, 0]),
];
const TARGET_SIZE: usize = 256;
pub const LEGEND: &str = "legend.json";

fn draw(img: &mut RgbImage, label: &LabelMap, scale: u32, color: [u8; 3]) -> bool {
    let edge = boundary(&label.mapv(|v| v > 0));
    for &(r, c) in &edge {
        for dy in 0..scale {
            for dx in 0..scale {
                img.put_pixel(c as u32 * scale + dx, r as u32 * scale + dy, Rgb(color));
            }
        }
    }
    !edge.is_empty()
}

fn grayscale(image: &ndarray::Array2<f32>, scale: u32) -> RgbImage {
    let (h, w) = image.dim();
    let (lo, hi) = image
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    RgbImage::from_fn(w as u32 * scale, h as u32 * scale, |x, y| {
        let v = image[[(y / scale) as usize, (x / scale) as usize]];
        let g = (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([g, g, g])
    })
}

pub fn plot(checkpoints: &[std::path::PathBuf], data: &Path, split: &str, n_examples: usize, out: &Path) -> anyhow::Result<()> {
    if checkpoints.len() > PREDICTION_COLORS.len() {
        anyhow::bail!("at most {} checkpoints can share one overlay", PREDICTION_COLORS.len());
    }
    let models = checkpoints
        .iter()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let samples = load_part(data, split, models[0].generator.num_classes())?;
    for ck in &models {
        check_dims(ck, &samples)?;
    }
    let n = if n_examples > samples.len() {
        log::warn!("n_examples {n_examples} exceeds the {} available samples; clamped", samples.len());
        samples.len()
    } else {
        n_examples
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (h, w) = samples[0].dims();
    let scale = (TARGET_SIZE / h.max(w)).max(1) as u32;
    let mut images = Vec::new();
    for (i, s) in samples.iter().take(n).enumerate() {
        let mut img = grayscale(&s.image, scale);
        let target_drawn = draw(&mut img, &s.label, scale, TARGET_COLOR.1);
        let mut empty = Vec::new();
        for (k, ck) in models.iter().enumerate() {
            let pred = ck.generator.segment(&s.image)?;
            if !draw(&mut img, &pred, scale, PREDICTION_COLORS[k].1) {
                empty.push(k);
            }
        }
        let file = format!("overlay_{i:03}_{}.png", s.id);
        let path = out.join(&file);
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
        image::open(&path).with_context(|| format!("re-reading {}", path.display()))?;
        images.push(json!({
            "file": file,
            "sample": s.id,
            "target_contour": target_drawn,
            "empty_predictions": empty,
        }));
    }
    let legend = json!({
        "target": { "color": TARGET_COLOR.0, "rgb": TARGET_COLOR.1 },
        "predictions": checkpoints.iter().enumerate().map(|(k, p)| json!({
            "checkpoint": p.display().to_string(),
            "color": PREDICTION_COLORS[k].0,
            "rgb": PREDICTION_COLORS[k].1,
        })).collect::<Vec<_>>(),
        "scale": scale,
        "images": images,
        "note": "empty_predictions lists checkpoints whose prediction had no foreground; no contour is drawn for them",
    });
    let path = out.join(LEGEND);
    fs::write(&path, serde_json::to_string_pretty(&legend)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {n} overlays to {}", out.display());
    Ok(())
}
