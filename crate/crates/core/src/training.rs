//! Training loops for the plain segmenter and for the adversarial setup.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, ImageSample, LabelMap};
use crate::losses::{
    fake_logit_grad, generator_adversarial_loss, discriminator_loss, real_logit_grad, LossConfig, LossKind,
    ProbabilityMap, SegmentationObjective,
};
use crate::metrics::{evaluate_split, MetricsReport};
use crate::models::{ContextDiscriminator, ContextDiscriminatorConfig, GeneratorConfig, HeadKind, RoiDims, UNet};
use crate::nn::ops::softmax_backward;
use crate::nn::{Adam, AdamConfig, Parameterized};
use crate::roi::{crop_channels, uncrop_channels, RoiBox, RoiConfig, RoiMode};
use crate::{Error, Result, Scalar};

const GENERATOR_STREAM: u64 = 0;
const DISCRIMINATOR_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
/// Mean real score above `1 - SATURATION_MARGIN` counts as saturated.
const SATURATION_MARGIN: f64 = 1e-4;
const SATURATION_EPOCHS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// The learning rate lives here and is shared by both networks.
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub roi: RoiConfig,
    pub generator: GeneratorConfig,
    pub disc_head: HeadKind,
    /// Write `epoch_####.ckpt` every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub eval_every: usize,
    pub hd_percentile: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            batch_size: 8,
            seed: 0,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            roi: RoiConfig::default(),
            generator: GeneratorConfig::default(),
            disc_head: HeadKind::FullyConnected,
            checkpoint_every: 10,
            eval_every: 1,
            hd_percentile: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("train.batch_size must be positive");
        }
        if self.eval_every == 0 {
            return bad("train.eval_every must be positive");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return bad("train.learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if !(self.hd_percentile > 0.0 && self.hd_percentile <= 100.0) {
            return bad("metrics.hd_percentile must lie in (0, 100]");
        }
        self.loss.validate()?;
        self.generator.validate()
    }

    fn check_split(&self, split: &DatasetSplit) -> Result<(usize, usize)> {
        self.validate()?;
        split.validate()?;
        if split.train.is_empty() {
            return Err(Error::Config("training split is empty".into()));
        }
        if split.num_classes != self.generator.num_classes {
            return Err(Error::Config(format!(
                "dataset has {} classes, generator is configured for {}",
                split.num_classes, self.generator.num_classes
            )));
        }
        let dims = split.dims().expect("non-empty split");
        self.generator.check_input(dims)?;
        if self.loss.kind == LossKind::Context {
            self.roi.validate(dims)?;
        }
        Ok(dims)
    }

    /// Discriminator layout implied by the ROI policy and head choice.
    pub fn discriminator_config(&self, dims: (usize, usize)) -> Result<ContextDiscriminatorConfig> {
        let roi_dims = match (self.roi.mode, self.disc_head) {
            (RoiMode::Dynamic, HeadKind::FullyConnected) => {
                return Err(Error::Config(
                    "dynamic ROIs vary in size; disc.head = fully_connected cannot take them (use gap)".into(),
                ))
            }
            (RoiMode::Dynamic, HeadKind::Gap) => RoiDims::Variable,
            (RoiMode::Static, _) => RoiDims::Fixed(self.roi.static_dims.0, self.roi.static_dims.1),
        };
        let cfg = ContextDiscriminatorConfig {
            num_classes: self.generator.num_classes,
            full_dims: dims,
            roi_dims,
            head: self.disc_head,
        };
        cfg.validate()?;
        self.roi.validate(dims)?;
        Ok(cfg)
    }
}

/// Summary of one completed epoch. Contains no timing, so two runs with
/// the same seed serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Sample-averaged training losses by component.
    pub losses: BTreeMap<String, f64>,
    pub val_mean_dice: Option<f64>,
    pub val_mean_hd: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Seconds per epoch, index-aligned with `records`.
    pub wall_time_s: Vec<f64>,
}

impl TrainLog {
    /// One JSON object per line, one line per epoch.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// What an observer sees after every epoch.
pub struct EpochState<'a, T> {
    pub record: &'a EpochRecord,
    pub wall_time_s: f64,
    pub generator: &'a UNet<T>,
    pub discriminator: Option<&'a ContextDiscriminator<T>>,
    /// Validation Dice improved on this epoch.
    pub improved: bool,
    pub is_last: bool,
}

/// Receives per-epoch progress, typically to write logs and checkpoints.
pub trait TrainObserver<T> {
    fn on_epoch(&mut self, state: &EpochState<'_, T>) -> Result<()>;
}

impl<T> TrainObserver<T> for () {
    fn on_epoch(&mut self, _: &EpochState<'_, T>) -> Result<()> {
        Ok(())
    }
}

/// Result of a training run. `best_*` holds the weights with the highest
/// validation mean Dice (the final weights when nothing was evaluated).
#[derive(Clone, Debug)]
pub struct TrainedModels<T> {
    pub generator: UNet<T>,
    pub discriminator: Option<ContextDiscriminator<T>>,
    pub best_generator: UNet<T>,
    pub best_discriminator: Option<ContextDiscriminator<T>>,
    pub best_epoch: usize,
    pub best_val_dice: Option<f64>,
    pub log: TrainLog,
}

/// Argmax label map; the ROI plays no part at inference.
pub fn predict<T: Scalar>(model: &UNet<T>, image: &Array2<f32>) -> Result<LabelMap> {
    model.predict(image)
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn to_input<T: Scalar>(s: &ImageSample) -> Array3<T> {
    s.image.mapv(|v| T::lit(v as f64)).insert_axis(Axis(0))
}

/// Box for the local branch, always computed from the target label.
fn target_box(roi: &RoiConfig, label: &LabelMap) -> Result<RoiBox> {
    let b = roi.select(label)?;
    if !b.fits(label.dim()) {
        return Err(Error::Contract(format!("ROI {b:?} leaves the {:?} image", label.dim())));
    }
    Ok(b)
}

fn check_finite(value: f64, what: &str, epoch: usize, step: usize, id: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            location: format!("epoch {epoch}, step {step}, sample {id}"),
        })
    }
}

#[derive(Default)]
struct Meter {
    sums: BTreeMap<String, f64>,
    count: usize,
}

impl Meter {
    fn add(&mut self, key: &str, v: f64) {
        *self.sums.entry(key.to_string()).or_default() += v;
    }

    fn means(&self) -> BTreeMap<String, f64> {
        let n = self.count.max(1) as f64;
        self.sums.iter().map(|(k, v)| (k.clone(), v / n)).collect()
    }
}

struct Selection<T> {
    best_generator: UNet<T>,
    best_discriminator: Option<ContextDiscriminator<T>>,
    best_epoch: usize,
    best_val_dice: Option<f64>,
}

impl<T: Scalar> Selection<T> {
    fn new(g: &UNet<T>, d: Option<&ContextDiscriminator<T>>) -> Self {
        Self {
            best_generator: g.clone(),
            best_discriminator: d.cloned(),
            best_epoch: 0,
            best_val_dice: None,
        }
    }

    /// Returns whether this epoch became the new best.
    fn update(
        &mut self,
        epoch: usize,
        report: Option<&MetricsReport>,
        g: &UNet<T>,
        d: Option<&ContextDiscriminator<T>>,
    ) -> bool {
        let better = match (report, self.best_val_dice) {
            (Some(r), None) => r.mean_dice.is_finite() || self.best_epoch == 0,
            (Some(r), Some(b)) => r.mean_dice > b,
            // Without validation the latest weights are kept.
            (None, None) => true,
            (None, Some(_)) => false,
        };
        if better {
            self.best_generator = g.clone();
            self.best_discriminator = d.cloned();
            self.best_epoch = epoch;
            if let Some(r) = report {
                self.best_val_dice = Some(r.mean_dice);
            }
        }
        better
    }
}

fn maybe_evaluate<T: Scalar>(
    cfg: &TrainConfig,
    split: &DatasetSplit,
    g: &UNet<T>,
    epoch: usize,
) -> Result<Option<MetricsReport>> {
    if split.val.is_empty() || (epoch % cfg.eval_every != 0 && epoch != cfg.epochs) {
        return Ok(None);
    }
    evaluate_split(g, &split.val, split.num_classes, cfg.hd_percentile).map(Some)
}

fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size)
}

/// Trains the U-Net on the configured loss.
pub fn train_segmenter<T: Scalar>(
    cfg: &TrainConfig,
    split: &DatasetSplit,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainedModels<T>> {
    cfg.check_split(split)?;
    let objective = SegmentationObjective::<T>::new(&cfg.loss, cfg.loss.class_weights.as_deref())?;
    let mut gen = UNet::<T>::new(cfg.generator.clone(), &mut rng_stream(cfg.seed, GENERATOR_STREAM))?;
    let mut shuffle = rng_stream(cfg.seed, SHUFFLE_STREAM);
    let mut adam = Adam::new(&gen, cfg.adam);
    let mut grads = gen.zeros_like();
    let inputs: Vec<Array3<T>> = split.train.iter().map(to_input).collect();
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut selection = Selection::new(&gen, None);
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle);
        let mut meter = Meter::default();
        let mut steps = 0;
        for batch in batches(&order, cfg.batch_size) {
            steps += 1;
            let inv_b = T::one() / T::lit(batch.len() as f64);
            for &i in batch {
                let sample = &split.train[i];
                let (logits, cache) = gen.forward_logits(&inputs[i])?;
                let probs = ProbabilityMap::from_logits(&logits);
                let roi = if objective.uses_roi() {
                    Some(target_box(&cfg.roi, &sample.label)?)
                } else {
                    None
                };
                let terms = objective.evaluate(&probs, &sample.label, roi.as_ref())?;
                check_finite(terms.total.as_f64(), "training loss", epoch, steps, &sample.id)?;
                for (name, v) in &terms.components {
                    meter.add(name, v.as_f64());
                }
                meter.add("total", terms.total.as_f64());
                meter.count += 1;
                let mut dlogits = softmax_backward(probs.values(), &terms.grad);
                dlogits *= inv_b;
                gen.backward(&cache, &dlogits, &mut grads);
            }
            adam.step(&mut gen, &grads);
            grads.fill_zero();
            if !gen.all_finite() {
                return Err(Error::NonFinite {
                    what: "generator parameters".into(),
                    location: format!("epoch {epoch}, step {steps}"),
                });
            }
        }
        let report = maybe_evaluate(cfg, split, &gen, epoch)?;
        let improved = selection.update(epoch, report.as_ref(), &gen, None);
        let record = EpochRecord {
            epoch,
            steps,
            losses: meter.means(),
            val_mean_dice: report.as_ref().map(|r| r.mean_dice),
            val_mean_hd: report.as_ref().map(|r| r.mean_hd),
        };
        let wall = start.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}/{}: loss {:.5} val dice {}",
            cfg.epochs,
            record.losses.get("total").copied().unwrap_or(f64::NAN),
            record.val_mean_dice.map_or("-".to_string(), |d| format!("{d:.4}"))
        );
        observer.on_epoch(&EpochState {
            record: &record,
            wall_time_s: wall,
            generator: &gen,
            discriminator: None,
            improved,
            is_last: epoch == cfg.epochs,
        })?;
        log.records.push(record);
        log.wall_time_s.push(wall);
    }
    Ok(TrainedModels {
        generator: gen,
        discriminator: None,
        best_generator: selection.best_generator,
        best_discriminator: None,
        best_epoch: selection.best_epoch,
        best_val_dice: selection.best_val_dice,
        log,
    })
}

/// Trains generator and context discriminator alternately: per batch one
/// discriminator step, then one generator step against the updated
/// discriminator.
pub fn train_seg_glgan<T: Scalar>(
    cfg: &TrainConfig,
    split: &DatasetSplit,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainedModels<T>> {
    let dims = cfg.check_split(split)?;
    if cfg.loss.kind != LossKind::Ce {
        return Err(Error::Config(format!(
            "the adversarial trainer uses cross-entropy as its pixel loss, not {}",
            cfg.loss.kind
        )));
    }
    let disc_cfg = cfg.discriminator_config(dims)?;
    let objective = SegmentationObjective::<T>::new(&cfg.loss, None)?;
    let lambda = T::lit(cfg.loss.lambda_adv);
    let adversarial = cfg.loss.lambda_adv > 0.0;
    let c = split.num_classes;

    let mut gen = UNet::<T>::new(cfg.generator.clone(), &mut rng_stream(cfg.seed, GENERATOR_STREAM))?;
    let mut disc = ContextDiscriminator::<T>::new(disc_cfg, &mut rng_stream(cfg.seed, DISCRIMINATOR_STREAM))?;
    let mut shuffle = rng_stream(cfg.seed, SHUFFLE_STREAM);
    let mut adam_g = Adam::new(&gen, cfg.adam);
    let mut adam_d = Adam::new(&disc, cfg.adam);
    let mut grads_g = gen.zeros_like();
    let mut grads_d = disc.zeros_like();
    let mut scratch_d = disc.zeros_like();
    let inputs: Vec<Array3<T>> = split.train.iter().map(to_input).collect();
    let targets: Vec<Array3<T>> = split
        .train
        .iter()
        .map(|s| ProbabilityMap::one_hot(&s.label, c).map(ProbabilityMap::into_values))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut selection = Selection::new(&gen, Some(&disc));
    let mut log = TrainLog::default();
    let mut saturated_streak = 0usize;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle);
        let mut meter = Meter::default();
        let (mut score_min, mut score_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut real_sum = 0.0;
        let mut steps = 0;
        for batch in batches(&order, cfg.batch_size) {
            steps += 1;
            let inv_b = T::one() / T::lit(batch.len() as f64);
            let boxes = batch
                .iter()
                .map(|&i| target_box(&cfg.roi, &split.train[i].label))
                .collect::<Result<Vec<_>>>()?;

            // Discriminator step on detached generator outputs.
            let mut fakes = Vec::with_capacity(batch.len());
            let (mut real_scores, mut fake_scores) = (Vec::new(), Vec::new());
            for (&i, roi) in batch.iter().zip(&boxes) {
                let probs = gen.forward(&inputs[i])?;
                let real = disc.forward(&targets[i], &crop_channels(&targets[i], roi)?)?;
                let fake_full = probs.values();
                let fake = disc.forward(fake_full, &crop_channels(fake_full, roi)?)?;
                disc.backward(&real.cache, real_logit_grad(real.score) * inv_b, &mut grads_d, false);
                disc.backward(&fake.cache, fake_logit_grad(fake.score) * inv_b, &mut grads_d, false);
                real_scores.push(real.score);
                fake_scores.push(fake.score);
                fakes.push(probs);
            }
            let d_loss = discriminator_loss(&real_scores, &fake_scores)?.as_f64();
            check_finite(d_loss, "discriminator loss", epoch, steps, &split.train[batch[0]].id)?;
            for &s in real_scores.iter().chain(&fake_scores) {
                score_min = score_min.min(s.as_f64());
                score_max = score_max.max(s.as_f64());
            }
            real_sum += real_scores.iter().map(|s| s.as_f64()).sum::<f64>();
            meter.add("discriminator", d_loss * batch.len() as f64);
            meter.add("score_real", real_scores.iter().map(|s| s.as_f64()).sum());
            meter.add("score_fake", fake_scores.iter().map(|s| s.as_f64()).sum());
            adam_d.step(&mut disc, &grads_d);
            grads_d.fill_zero();

            // Generator step against the updated discriminator.
            for ((&i, roi), probs) in batch.iter().zip(&boxes).zip(&fakes) {
                let sample = &split.train[i];
                let (logits, cache) = gen.forward_logits(&inputs[i])?;
                debug_assert_eq!(&ProbabilityMap::from_logits(&logits), probs);
                let terms = objective.evaluate(probs, &sample.label, None)?;
                let mut dprobs = terms.grad;
                let mut adv = 0.0;
                if adversarial {
                    let out = disc.forward(probs.values(), &crop_channels(probs.values(), roi)?)?;
                    adv = generator_adversarial_loss(&[out.score]).as_f64();
                    score_min = score_min.min(out.score.as_f64());
                    score_max = score_max.max(out.score.as_f64());
                    let (d_full, d_roi) = disc
                        .backward(&out.cache, lambda * real_logit_grad(out.score), &mut scratch_d, true)
                        .expect("input grads requested");
                    scratch_d.fill_zero();
                    dprobs += &d_full;
                    dprobs += &uncrop_channels(&d_roi, roi, dims)?;
                }
                let mce = terms.total.as_f64();
                let total = mce + cfg.loss.lambda_adv * adv;
                check_finite(total, "generator loss", epoch, steps, &sample.id)?;
                meter.add("mce", mce);
                meter.add("adv", adv);
                meter.add("generator", total);
                meter.count += 1;
                let mut dlogits = softmax_backward(probs.values(), &dprobs);
                dlogits *= inv_b;
                gen.backward(&cache, &dlogits, &mut grads_g);
            }
            adam_g.step(&mut gen, &grads_g);
            grads_g.fill_zero();
            if !gen.all_finite() || !disc.all_finite() {
                return Err(Error::NonFinite {
                    what: "model parameters".into(),
                    location: format!("epoch {epoch}, step {steps}"),
                });
            }
        }
        let mean_real = real_sum / split.train.len() as f64;
        if mean_real > 1.0 - SATURATION_MARGIN {
            saturated_streak += 1;
            if saturated_streak == SATURATION_EPOCHS {
                log::warn!(
                    "discriminator saturated: mean real score above {} for {SATURATION_EPOCHS} epochs (epoch {epoch})",
                    1.0 - SATURATION_MARGIN
                );
            }
        } else {
            saturated_streak = 0;
        }
        let report = maybe_evaluate(cfg, split, &gen, epoch)?;
        let improved = selection.update(epoch, report.as_ref(), &gen, Some(&disc));
        let mut losses = meter.means();
        losses.insert("score_min".into(), score_min);
        losses.insert("score_max".into(), score_max);
        let record = EpochRecord {
            epoch,
            steps,
            losses,
            val_mean_dice: report.as_ref().map(|r| r.mean_dice),
            val_mean_hd: report.as_ref().map(|r| r.mean_hd),
        };
        let wall = start.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}/{}: G {:.5} D {:.5} val dice {}",
            cfg.epochs,
            record.losses["generator"],
            record.losses["discriminator"],
            record.val_mean_dice.map_or("-".to_string(), |d| format!("{d:.4}"))
        );
        observer.on_epoch(&EpochState {
            record: &record,
            wall_time_s: wall,
            generator: &gen,
            discriminator: Some(&disc),
            improved,
            is_last: epoch == cfg.epochs,
        })?;
        log.records.push(record);
        log.wall_time_s.push(wall);
    }
    Ok(TrainedModels {
        generator: gen,
        discriminator: Some(disc),
        best_generator: selection.best_generator,
        best_discriminator: selection.best_discriminator,
        best_epoch: selection.best_epoch,
        best_val_dice: selection.best_val_dice,
        log,
    })
}

/// Discriminator loss of freshly initialized weights on the first
/// `batch` training samples, before any update.
pub fn initial_discriminator_loss<T: Scalar>(cfg: &TrainConfig, split: &DatasetSplit, batch: usize) -> Result<f64> {
    let dims = cfg.check_split(split)?;
    let gen = UNet::<T>::new(cfg.generator.clone(), &mut rng_stream(cfg.seed, GENERATOR_STREAM))?;
    let disc = ContextDiscriminator::<T>::new(
        cfg.discriminator_config(dims)?,
        &mut rng_stream(cfg.seed, DISCRIMINATOR_STREAM),
    )?;
    let (mut real, mut fake) = (Vec::new(), Vec::new());
    for s in split.train.iter().take(batch.max(1)) {
        let roi = target_box(&cfg.roi, &s.label)?;
        let t = ProbabilityMap::<T>::one_hot(&s.label, split.num_classes)?.into_values();
        let p = gen.forward(&to_input(s))?.into_values();
        real.push(disc.forward(&t, &crop_channels(&t, &roi)?)?.score);
        fake.push(disc.forward(&p, &crop_channels(&p, &roi)?)?.score);
    }
    Ok(discriminator_loss(&real, &fake)?.as_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    fn tiny_split(n: usize) -> DatasetSplit {
        generate_synthetic(&SynthConfig {
            image_size: (16, 16),
            object_radius_range: (2.0, 3.0),
            foreground_fraction_target: 0.08,
            count_train: n,
            count_val: 2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            seed: 5,
            generator: GeneratorConfig { depth: 3, base_channels: 2, ..GeneratorConfig::default() },
            roi: RoiConfig { static_dims: (8, 8), min_size: 8, ..RoiConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let split = tiny_split(3);
        let cfg = TrainConfig { epochs: 0, ..tiny_cfg() };
        let out = train_segmenter::<f64>(&cfg, &split, &mut ()).unwrap();
        let init = UNet::<f64>::new(cfg.generator.clone(), &mut rng_stream(cfg.seed, GENERATOR_STREAM)).unwrap();
        assert_eq!(out.generator, init);
        assert!(out.log.records.is_empty());
    }

    #[test]
    fn context_without_local_term_matches_ce() {
        let split = tiny_split(4);
        let ce = train_segmenter::<f64>(&tiny_cfg(), &split, &mut ()).unwrap();
        let mut cfg = tiny_cfg();
        cfg.loss.kind = LossKind::Context;
        cfg.loss.lambda_local = 0.0;
        let ctx = train_segmenter::<f64>(&cfg, &split, &mut ()).unwrap();
        assert_eq!(ce.generator, ctx.generator);
    }

    #[test]
    fn gan_without_adversarial_term_matches_ce() {
        let split = tiny_split(4);
        let ce = train_segmenter::<f64>(&tiny_cfg(), &split, &mut ()).unwrap();
        let mut cfg = tiny_cfg();
        cfg.loss.lambda_adv = 0.0;
        let gan = train_seg_glgan::<f64>(&cfg, &split, &mut ()).unwrap();
        assert_eq!(ce.generator, gan.generator);
        assert_eq!(gan.log.records.len(), 2);
    }

    #[test]
    fn dynamic_roi_with_fc_head_rejected_before_training() {
        let mut cfg = tiny_cfg();
        cfg.roi.mode = RoiMode::Dynamic;
        let e = train_seg_glgan::<f32>(&cfg, &tiny_split(2), &mut ()).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn fresh_discriminator_is_uninformative() {
        let mut cfg = tiny_cfg();
        cfg.roi.mode = RoiMode::Dynamic;
        cfg.disc_head = HeadKind::Gap;
        let l = initial_discriminator_loss::<f64>(&cfg, &tiny_split(4), 4).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-2, "{l}");
    }

    #[test]
    fn seeded_runs_repeat() {
        let split = tiny_split(3);
        let mut cfg = tiny_cfg();
        cfg.roi.mode = RoiMode::Dynamic;
        cfg.disc_head = HeadKind::Gap;
        let a = train_seg_glgan::<f32>(&cfg, &split, &mut ()).unwrap();
        let b = train_seg_glgan::<f32>(&cfg, &split, &mut ()).unwrap();
        assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
        assert_eq!(a.generator, b.generator);
    }
}
