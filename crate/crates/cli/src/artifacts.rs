//! Files written by a training run and their read-back checks.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ctxseg::checkpoint::{self, SegmenterModel};
use ctxseg::data::DatasetSplit;
use ctxseg::metrics::MetricsReport;
use ctxseg::training::{EpochRecord, EpochState, TrainObserver, TrainedModels};
use ctxseg::Result as CoreResult;

pub const TRAINLOG: &str = "trainlog.jsonl";
/// Per-epoch wall time, kept apart so the training log stays reproducible.
pub const TIMING: &str = "timing.jsonl";
pub const BEST: &str = "best.ckpt";
pub const REPORT: &str = "report.json";
pub const CONFIG: &str = "config.txt";

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn report_json(report: &MetricsReport) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

/// Writes `trainlog.jsonl`, `timing.jsonl` and periodic checkpoints as
/// training progresses; [`RunDirectory::finish`] adds the best checkpoint
/// and the validation report.
pub struct RunDirectory {
    dir: PathBuf,
    echo: BTreeMap<String, String>,
    dims: (usize, usize),
    checkpoint_every: usize,
    trainlog: fs::File,
    timing: fs::File,
    written: Vec<PathBuf>,
}

fn core_io(path: &Path, e: std::io::Error) -> ctxseg::Error {
    ctxseg::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl RunDirectory {
    pub fn create(
        dir: &Path,
        echo: BTreeMap<String, String>,
        dims: (usize, usize),
        checkpoint_every: usize,
    ) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let open = |name: &str| {
            let p = dir.join(name);
            fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
        };
        let text: String = echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        write_text(&dir.join(CONFIG), &text)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            trainlog: open(TRAINLOG)?,
            timing: open(TIMING)?,
            echo,
            dims,
            checkpoint_every,
            written: Vec::new(),
        })
    }

    fn metadata(&self, epoch: usize, extra: &[(&str, String)]) -> BTreeMap<String, String> {
        let mut m = BTreeMap::from([
            ("epoch".to_string(), epoch.to_string()),
            ("input_height".to_string(), self.dims.0.to_string()),
            ("input_width".to_string(), self.dims.1.to_string()),
        ]);
        for (k, v) in extra {
            m.insert(k.to_string(), v.clone());
        }
        m
    }

    pub fn finish(&mut self, trained: &TrainedModels<f32>, split: &DatasetSplit, hd_percentile: f64) -> anyhow::Result<()> {
        let selection = [
            ("selection", "best_val_mean_dice".to_string()),
            ("selected_epoch", trained.best_epoch.to_string()),
        ];
        let best = self.dir.join(BEST);
        let model = SegmenterModel::UNet(trained.best_generator.clone());
        checkpoint::save(
            &best,
            &model,
            trained.best_discriminator.as_ref(),
            &self.echo,
            &self.metadata(trained.best_epoch, &selection),
        )?;
        self.written.push(best);
        if split.val.is_empty() {
            log::warn!("no validation samples; {REPORT} not written");
        } else {
            let mut echo = self.echo.clone();
            for (k, v) in &selection {
                echo.insert(format!("run.{k}"), v.clone());
            }
            let report = crate::commands::eval_report(&model, &echo, &split.val, hd_percentile)?;
            let path = self.dir.join(REPORT);
            write_text(&path, &report_json(&report)?)?;
            validate_report(&path)?;
            log::info!(
                "best epoch {}: val mean Dice {:.4}, mean HD {:.3}",
                trained.best_epoch,
                report.mean_dice,
                report.mean_hd
            );
        }
        let records = validate_trainlog(&self.dir.join(TRAINLOG))?;
        if records.len() != trained.log.records.len() {
            bail!("{TRAINLOG} has {} records, expected {}", records.len(), trained.log.records.len());
        }
        for p in &self.written {
            checkpoint::load::<f32>(p).with_context(|| format!("re-reading {}", p.display()))?;
        }
        Ok(())
    }
}

impl TrainObserver<f32> for RunDirectory {
    fn on_epoch(&mut self, state: &EpochState<'_, f32>) -> CoreResult<()> {
        let e = state.record.epoch;
        let line = serde_json::to_string(state.record).expect("record serializes");
        let path = self.dir.join(TRAINLOG);
        writeln!(self.trainlog, "{line}").map_err(|err| core_io(&path, err))?;
        let tpath = self.dir.join(TIMING);
        writeln!(self.timing, "{{\"epoch\":{e},\"wall_time_s\":{}}}", state.wall_time_s)
            .map_err(|err| core_io(&tpath, err))?;
        if self.checkpoint_every > 0 && (e % self.checkpoint_every == 0 || state.is_last) {
            let p = self.dir.join(epoch_checkpoint_name(e));
            checkpoint::save(
                &p,
                &SegmenterModel::UNet(state.generator.clone()),
                state.discriminator,
                &self.echo,
                &self.metadata(e, &[]),
            )?;
            self.written.push(p);
        }
        Ok(())
    }
}

/// Parses every line of a training log back into records.
pub fn validate_trainlog(path: &Path) -> anyhow::Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let r: EpochRecord =
            serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if r.epoch != i + 1 {
            bail!("{} line {}: epoch {} out of order", path.display(), i + 1, r.epoch);
        }
        if r.losses.values().any(|v| !v.is_finite()) {
            bail!("{} line {}: non-finite loss", path.display(), i + 1);
        }
        out.push(r);
    }
    Ok(out)
}

/// Checks a metrics report for the required keys and value ranges.
pub fn validate_report(path: &Path) -> anyhow::Result<MetricsReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let r: MetricsReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if r.per_class_dice.len() != r.per_class_hd.len() || r.per_class_dice.is_empty() {
        bail!("{}: per-class arrays malformed", path.display());
    }
    if r.per_class_dice.iter().any(|d| !(0.0..=1.0).contains(d)) || r.per_class_hd.iter().any(|h| !(*h >= 0.0)) {
        bail!("{}: metric out of range", path.display());
    }
    if r.n_samples == 0 {
        bail!("{}: no samples", path.display());
    }
    Ok(r)
}
