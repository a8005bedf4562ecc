use ctxseg::data::{generate_synthetic, ImageSample, LabelMap, SynthConfig};
use ctxseg::losses::{dice_loss, ProbabilityMap, SegmentationObjective, LossConfig, LossKind, DICE_SMOOTH};
use ctxseg::metrics::{
    dice_coefficient, evaluate_split, hausdorff_distance, Segmenter,
};
use ctxseg::models::{
    ContextDiscriminator, ContextDiscriminatorConfig, GeneratorConfig, HeadKind, RoiDims, UNet,
};
use ctxseg::nn::ops::softmax_backward;
use ctxseg::nn::Parameterized;
use ctxseg::roi::{crop_channels, extract_dynamic_roi, uncrop_channels, RoiConfig, RoiMode};
use ctxseg::training::{train_segmenter, TrainConfig};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> Array2<bool> {
    Array2::from_shape_fn((h, w), |_| rng.random_bool(p))
}

#[test]
fn dice_symmetric_and_translation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let a = random_mask(&mut rng, 12, 12, 0.3);
        let b = random_mask(&mut rng, 12, 12, 0.3);
        assert_eq!(dice_coefficient(&a, &b).unwrap(), dice_coefficient(&b, &a).unwrap());
        // Embed both in a larger canvas at a shared offset.
        let shift = |m: &Array2<bool>| {
            let mut big = Array2::from_elem((20, 20), false);
            big.slice_mut(ndarray::s![5..17, 3..15]).assign(m);
            big
        };
        assert_eq!(
            dice_coefficient(&a, &b).unwrap(),
            dice_coefficient(&shift(&a), &shift(&b)).unwrap()
        );
    }
}

#[test]
fn hausdorff_is_a_metric_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trials = 0;
    while trials < 200 {
        let m: Vec<_> = (0..3).map(|_| random_mask(&mut rng, 14, 14, 0.15)).collect();
        if m.iter().any(|x| !x.iter().any(|&v| v)) {
            continue;
        }
        trials += 1;
        let d = |i: usize, j: usize| hausdorff_distance(&m[i], &m[j]).unwrap();
        assert_eq!(d(0, 1), d(1, 0));
        assert_eq!(d(0, 0), 0.0);
        assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
    }
}

#[test]
fn hard_dice_matches_soft_dice_loss_on_one_hot_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let t: LabelMap = Array2::from_shape_fn((10, 10), |_| rng.random_bool(0.2) as u8);
        let p: LabelMap = Array2::from_shape_fn((10, 10), |_| rng.random_bool(0.2) as u8);
        let hard = dice_coefficient(&p.mapv(|v| v == 1), &t.mapv(|v| v == 1)).unwrap();
        let soft = 1.0 - dice_loss(&ProbabilityMap::<f64>::one_hot(&p, 2).unwrap(), &t).unwrap();
        let sizes = p.iter().filter(|&&v| v == 1).count() + t.iter().filter(|&&v| v == 1).count();
        assert!((hard - soft).abs() <= DICE_SMOOTH / (sizes as f64 + DICE_SMOOTH) + 1e-12);
    }
}

struct Oracle(Vec<LabelMap>, std::cell::Cell<usize>);

impl Segmenter for Oracle {
    fn segment(&self, _: &Array2<f32>) -> ctxseg::Result<LabelMap> {
        let i = self.1.get();
        self.1.set(i + 1);
        Ok(self.0[i].clone())
    }
}

struct Background;

impl Segmenter for Background {
    fn segment(&self, image: &Array2<f32>) -> ctxseg::Result<LabelMap> {
        Ok(Array2::zeros(image.dim()))
    }
}

#[test]
fn evaluate_split_oracle_and_background_models() {
    let split = generate_synthetic(&SynthConfig { count_train: 1, count_val: 6, ..SynthConfig::default() }).unwrap();
    let oracle = Oracle(split.val.iter().map(|s| s.label.clone()).collect(), 0.into());
    let r = evaluate_split(&oracle, &split.val, 2, 100.0).unwrap();
    assert_eq!((r.mean_dice, r.mean_hd, r.n_samples), (1.0, 0.0, 6));
    let r = evaluate_split(&Background, &split.val, 2, 100.0).unwrap();
    assert_eq!(r.mean_dice, 0.0);
    assert!(evaluate_split(&Background, &[], 2, 100.0).is_err());
}

fn shape_contract(dims: (usize, usize), classes: usize, roi: RoiConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = UNet::<f32>::new(
        GeneratorConfig { num_classes: classes, ..GeneratorConfig::default() },
        &mut rng,
    )
    .unwrap();
    let x = Array3::from_shape_fn((1, dims.0, dims.1), |_| rng.random::<f32>());
    let probs = g.forward(&x).unwrap();
    assert_eq!(probs.values().dim(), (classes, dims.0, dims.1));
    let (roi_dims, head) = match roi.mode {
        RoiMode::Static => (RoiDims::Fixed(roi.static_dims.0, roi.static_dims.1), HeadKind::FullyConnected),
        RoiMode::Dynamic => (RoiDims::Variable, HeadKind::Gap),
    };
    let d = ContextDiscriminator::<f32>::new(
        ContextDiscriminatorConfig { num_classes: classes, full_dims: dims, roi_dims, head },
        &mut rng,
    )
    .unwrap();
    let mut label: LabelMap = Array2::zeros(dims);
    label.slice_mut(ndarray::s![40..70, 50..90]).fill(1);
    let b = roi.select(&label).unwrap();
    let s = d.forward(probs.values(), &crop_channels(probs.values(), &b).unwrap()).unwrap().score;
    assert!(s > 0.0 && s < 1.0);
}

#[test]
fn shape_contract_suite() {
    let dynamic = RoiConfig { mode: RoiMode::Dynamic, ..RoiConfig::default() };
    shape_contract((128, 128), 2, RoiConfig::promise12());
    shape_contract((128, 128), 2, dynamic);
    shape_contract((160, 160), 4, RoiConfig::acdc());
    shape_contract((160, 160), 4, dynamic);
}

fn small_gan() -> (UNet<f64>, ContextDiscriminator<f64>, Array3<f64>, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = UNet::<f64>::new(GeneratorConfig { depth: 3, base_channels: 2, ..GeneratorConfig::default() }, &mut rng).unwrap();
    let d = ContextDiscriminator::<f64>::new(
        ContextDiscriminatorConfig {
            num_classes: 2,
            full_dims: (16, 16),
            roi_dims: RoiDims::Variable,
            head: HeadKind::Gap,
        },
        &mut rng,
    )
    .unwrap();
    let x = Array3::from_shape_fn((1, 16, 16), |_| rng.random::<f64>());
    let mut label: LabelMap = Array2::zeros((16, 16));
    label.slice_mut(ndarray::s![5..8, 6..10]).fill(1);
    (g, d, x, label)
}

#[test]
fn discriminator_gradients_reach_both_branches() {
    let (g, d, x, label) = small_gan();
    let b = extract_dynamic_roi(&label, 2, 8).unwrap();
    let p = g.forward(&x).unwrap().into_values();
    let out = d.forward(&p, &crop_channels(&p, &b).unwrap()).unwrap();
    let mut grads = d.zeros_like();
    d.backward(&out.cache, out.score, &mut grads, false);
    for prefix in ["psi_g.", "psi_l.", "psi_c."] {
        let norm: f64 = grads
            .named_params()
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .flat_map(|(_, p)| p.data.iter().map(|v| v * v))
            .sum();
        assert!(norm > 0.0, "{prefix} received no gradient");
    }
}

#[test]
fn adversarial_gradient_reaches_every_generator_tensor() {
    let (g, d, x, label) = small_gan();
    let b = extract_dynamic_roi(&label, 2, 8).unwrap();
    let (logits, cache) = g.forward_logits(&x).unwrap();
    let p = ProbabilityMap::from_logits(&logits);
    let out = d.forward(p.values(), &crop_channels(p.values(), &b).unwrap()).unwrap();
    let mut scratch = d.zeros_like();
    let (df, dr) = d.backward(&out.cache, out.score - 1.0, &mut scratch, true).unwrap();
    let dprobs = df + uncrop_channels(&dr, &b, (16, 16)).unwrap();
    let mut grads = g.zeros_like();
    g.backward(&cache, &softmax_backward(p.values(), &dprobs), &mut grads);
    for (name, t) in grads.named_params() {
        assert!(t.data.iter().any(|v| *v != 0.0), "{name} received no gradient");
    }
}

#[test]
fn local_branch_gradient_is_zero_outside_roi_and_matches_fd_inside() {
    let (_, d, _, label) = small_gan();
    let b = extract_dynamic_roi(&label, 2, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let full = Array3::from_shape_fn((2, 16, 16), |_| rng.random::<f64>());
    let local_logit = |m: &Array3<f64>| {
        let f = d.local_features(&crop_channels(m, &b).unwrap()).unwrap();
        f.iter().zip(d.classifier().weight.data[64..].iter()).map(|(a, w)| a * w).sum::<f64>()
    };
    let out = d.forward(&full, &crop_channels(&full, &b).unwrap()).unwrap();
    let mut scratch = d.zeros_like();
    let (_, dr) = d.backward(&out.cache, 1.0, &mut scratch, true).unwrap();
    let g = uncrop_channels(&dr, &b, (16, 16)).unwrap();
    for ((c, y, x), v) in g.indexed_iter() {
        if !b.contains(y, x) {
            assert_eq!(*v, 0.0, "({c},{y},{x})");
        }
    }
    let h = 1e-6;
    for idx in [(0, b.row0, b.col0), (1, b.row0 + 2, b.col0 + 3)] {
        let (mut p, mut m) = (full.clone(), full.clone());
        p[idx] += h;
        m[idx] -= h;
        let num = (local_logit(&p) - local_logit(&m)) / (2.0 * h);
        assert!((num - g[idx]).abs() < 1e-6 * num.abs().max(1e-3), "{num} vs {}", g[idx]);
    }
}

#[test]
fn gap_head_handles_every_dynamic_roi() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = ContextDiscriminator::<f32>::new(
        ContextDiscriminatorConfig { num_classes: 2, full_dims: (64, 64), roi_dims: RoiDims::Variable, head: HeadKind::Gap },
        &mut rng,
    )
    .unwrap();
    let cfg = RoiConfig { mode: RoiMode::Dynamic, ..RoiConfig::default() };
    for _ in 0..30 {
        let m = random_mask(&mut rng, 64, 64, 0.002);
        let label = m.mapv(|v| v as u8);
        let b = cfg.select(&label).unwrap();
        let one_hot = ProbabilityMap::<f32>::one_hot(&label, 2).unwrap().into_values();
        let s = d.forward(&one_hot, &crop_channels(&one_hot, &b).unwrap()).unwrap().score;
        assert!(s.is_finite() && s > 0.0 && s < 1.0);
    }
    let zero = Array3::<f32>::zeros((2, 16, 16));
    assert!(d.local_features(&zero).unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn single_sample_overfits() {
    let split = generate_synthetic(&SynthConfig {
        image_size: (32, 32),
        object_radius_range: (3.0, 5.0),
        count_train: 1,
        count_val: 1,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        seed: 8,
        generator: GeneratorConfig { depth: 3, base_channels: 8, ..GeneratorConfig::default() },
        ..TrainConfig::default()
    };
    cfg.adam.learning_rate = 1e-3;
    let out = train_segmenter::<f32>(&cfg, &split, &mut ()).unwrap();
    let s: &ImageSample = &split.train[0];
    let pred = out.generator.predict(&s.image).unwrap();
    let dice = dice_coefficient(&pred.mapv(|v| v == 1), &s.label.mapv(|v| v == 1)).unwrap();
    assert!(dice > 0.95, "train Dice {dice}");
}

#[test]
fn context_objective_reports_both_components() {
    let cfg = LossConfig { kind: LossKind::Context, ..LossConfig::default() };
    let obj = SegmentationObjective::<f64>::new(&cfg, None).unwrap();
    let mut label: LabelMap = Array2::zeros((8, 8));
    label[[3, 3]] = 1;
    let b = extract_dynamic_roi(&label, 1, 4).unwrap();
    let p = ProbabilityMap::new(Array3::from_elem((2, 8, 8), 0.5)).unwrap();
    let t = obj.evaluate(&p, &label, Some(&b)).unwrap();
    let names: Vec<_> = t.components.iter().map(|(n, _)| *n).collect();
    assert_eq!(names, ["global", "local"]);
    assert!((t.total - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
}
