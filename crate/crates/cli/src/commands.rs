use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use ctxseg::checkpoint::{self, Checkpoint, SegmenterModel};
use ctxseg::config::{ExperimentConfig, Method};
use ctxseg::data::{generate_synthetic, load_dataset, write_dataset, DatasetSplit, ImageSample, SampleFormat};
use ctxseg::metrics::{evaluate_split, MetricsReport, Segmenter};
use ctxseg::training::{train_seg_glgan, train_segmenter};

use crate::artifacts::{self, RunDirectory};

pub fn load_config(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{o}'"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn gen_synth(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let synth = cfg.synth_config();
    let split = generate_synthetic(&synth)?;
    write_dataset(out, &split).with_context(|| format!("writing dataset to {}", out.display()))?;
    artifacts::write_text(&out.join("config.txt"), &cfg.to_text())?;
    let back = load_dataset(out, SampleFormat::SampleDir, synth.num_classes)?;
    if back.train.len() != split.train.len() || back.val.len() != split.val.len() {
        bail!("dataset written to {} does not read back", out.display());
    }
    log::info!(
        "wrote {} train and {} val samples to {}",
        split.train.len(),
        split.val.len(),
        out.display()
    );
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, data: &Path, out: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    let split = load_dataset(data, SampleFormat::SampleDir, cfg.num_classes)?;
    let dims = split.dims().ok_or_else(|| anyhow!("{} has no samples", data.display()))?;
    let tcfg = cfg.train_config();
    let echo = cfg.to_flat();
    let mut run = RunDirectory::create(out, echo.clone(), dims, tcfg.checkpoint_every)?;
    let trained = match cfg.method {
        Method::UNet => train_segmenter::<f32>(&tcfg, &split, &mut run)?,
        Method::SegGlgan => train_seg_glgan::<f32>(&tcfg, &split, &mut run)?,
    };
    run.finish(&trained, &split, tcfg.hd_percentile)?;
    Ok(())
}

pub fn load_part(data: &Path, split: &str, num_classes: usize) -> anyhow::Result<Vec<ImageSample>> {
    let ds: DatasetSplit = load_dataset(data, SampleFormat::SampleDir, num_classes)?;
    let part = match split {
        "train" => ds.train,
        "val" => ds.val,
        other => bail!("--split must be train or val, got '{other}'"),
    };
    if part.is_empty() {
        bail!("{}/{split} holds no samples", data.display());
    }
    Ok(part)
}

pub fn load_checkpoint(path: &Path) -> anyhow::Result<Checkpoint<f32>> {
    Ok(checkpoint::load::<f32>(path)?)
}

/// Rejects samples whose size differs from what the checkpoint was trained on.
pub fn check_dims(ck: &Checkpoint<f32>, samples: &[ImageSample]) -> anyhow::Result<()> {
    let found = samples[0].dims();
    if let (Some(h), Some(w)) = (ck.metadata.get("input_height"), ck.metadata.get("input_width")) {
        let expected: (usize, usize) = (h.parse()?, w.parse()?);
        if expected != found {
            bail!(
                "checkpoint expects {}x{} images, found {}x{}",
                expected.0,
                expected.1,
                found.0,
                found.1
            );
        }
    }
    ck.generator.check_dims(found)?;
    Ok(())
}

pub fn eval_report(
    model: &SegmenterModel<f32>,
    echo: &BTreeMap<String, String>,
    samples: &[ImageSample],
    hd_percentile: f64,
) -> anyhow::Result<MetricsReport> {
    let mut report = evaluate_split(model, samples, model.num_classes(), hd_percentile)?;
    report.config_echo = echo.clone();
    Ok(report)
}

fn hd_percentile(echo: &BTreeMap<String, String>) -> anyhow::Result<f64> {
    Ok(match echo.get("metrics.hd_percentile") {
        Some(v) => v.parse()?,
        None => 100.0,
    })
}

pub fn eval(ck_path: &Path, data: &Path, split: &str, out: &Path) -> anyhow::Result<()> {
    let ck = load_checkpoint(ck_path)?;
    let samples = load_part(data, split, ck.generator.num_classes())?;
    check_dims(&ck, &samples)?;
    let mut echo = ck.config_echo.clone();
    echo.insert("eval.split".into(), split.to_string());
    let report = eval_report(&ck.generator, &echo, &samples, hd_percentile(&ck.config_echo)?)?;
    let json = artifacts::report_json(&report)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    artifacts::write_text(&out.join("report.json"), &json)?;
    artifacts::validate_report(&out.join("report.json"))?;
    println!("{json}");
    Ok(())
}

pub fn predict(ck_path: &Path, data: &Path, split: &str, out: &Path) -> anyhow::Result<()> {
    let ck = load_checkpoint(ck_path)?;
    let c = ck.generator.num_classes();
    let samples = load_part(data, split, c)?;
    check_dims(&ck, &samples)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for s in &samples {
        let label = ck.generator.segment(&s.image)?;
        let (h, w) = label.dim();
        let bytes: Vec<u8> = label.iter().copied().collect();
        let lbl = out.join(format!("{}.lbl", s.id));
        fs::write(&lbl, bytes).with_context(|| format!("writing {}", lbl.display()))?;
        let meta = serde_json::json!({ "shape": [h, w], "classes": c });
        artifacts::write_text(&out.join(format!("{}.json", s.id)), &serde_json::to_string(&meta)?)?;
    }
    log::info!("wrote {} predictions to {}", samples.len(), out.display());
    Ok(())
}
