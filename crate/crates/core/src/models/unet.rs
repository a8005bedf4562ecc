use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::INIT_STD;
use crate::data::LabelMap;
use crate::losses::ProbabilityMap;
use crate::metrics::Segmenter;
use crate::nn::ops::{
    concat_channels, max_pool2, max_pool2_backward, relu, relu_backward, split_channels,
    upsample2_bilinear, upsample2_bilinear_backward,
};
use crate::nn::{child, Conv2d, ConvCache, InstanceNorm, NormCache, Param, Parameterized};
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Number of 2× downsampling stages.
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            num_classes: 2,
            depth: 4,
            base_channels: 32,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels != 1 {
            return Err(Error::Config("generator takes single-channel images".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("generator needs at least 2 classes".into()));
        }
        if self.depth < 3 {
            return Err(Error::Config(format!("model.depth {} must be >= 3", self.depth)));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("model.base_channels must be positive".into()));
        }
        Ok(())
    }

    pub fn check_input(&self, dims: (usize, usize)) -> Result<()> {
        let m = 1usize << self.depth;
        if dims.0 == 0 || dims.1 == 0 || dims.0 % m != 0 || dims.1 % m != 0 {
            return Err(Error::Config(format!(
                "input {}x{} is not divisible by 2^{} = {m}",
                dims.0, dims.1, self.depth
            )));
        }
        Ok(())
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// conv3×3 → norm → ReLU, twice.
#[derive(Clone, Debug, PartialEq)]
struct DoubleConv<T> {
    conv1: Conv2d<T>,
    norm1: InstanceNorm<T>,
    conv2: Conv2d<T>,
    norm2: InstanceNorm<T>,
}

#[derive(Clone, Debug)]
struct DoubleConvCache<T> {
    c1: ConvCache<T>,
    n1: NormCache<T>,
    a1: Array3<T>,
    c2: ConvCache<T>,
    n2: NormCache<T>,
    a2: Array3<T>,
}

impl<T: Scalar> DoubleConv<T> {
    fn new<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        Self {
            conv1: Conv2d::new(cin, cout, 3, INIT_STD, rng),
            norm1: InstanceNorm::new(cout),
            conv2: Conv2d::new(cout, cout, 3, INIT_STD, rng),
            norm2: InstanceNorm::new(cout),
        }
    }

    fn forward(&self, x: &Array3<T>) -> (Array3<T>, DoubleConvCache<T>) {
        let (y, c1) = self.conv1.forward(x);
        let (y, n1) = self.norm1.forward(&y);
        let a1 = relu(y);
        let (y, c2) = self.conv2.forward(&a1);
        let (y, n2) = self.norm2.forward(&y);
        let a2 = relu(y);
        let out = a2.clone();
        (out, DoubleConvCache { c1, n1, a1, c2, n2, a2 })
    }

    fn backward(
        &self,
        cache: &DoubleConvCache<T>,
        grad: Array3<T>,
        grads: &mut Self,
        want_input: bool,
    ) -> Option<Array3<T>> {
        let g = relu_backward(&cache.a2, grad);
        let g = self.norm2.backward(&cache.n2, &g, &mut grads.norm2);
        let g = self
            .conv2
            .backward(&cache.c2, &g, &mut grads.conv2, true)
            .expect("input grad requested");
        let g = relu_backward(&cache.a1, g);
        let g = self.norm1.backward(&cache.n1, &g, &mut grads.norm1);
        self.conv1.backward(&cache.c1, &g, &mut grads.conv1, want_input)
    }
}

impl<T: Scalar> Parameterized<T> for DoubleConv<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.conv1.visit(&child(prefix, "conv1"), out);
        self.norm1.visit(&child(prefix, "norm1"), out);
        self.conv2.visit(&child(prefix, "conv2"), out);
        self.norm2.visit(&child(prefix, "norm2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.conv1.visit_mut(&child(prefix, "conv1"), out);
        self.norm1.visit_mut(&child(prefix, "norm1"), out);
        self.conv2.visit_mut(&child(prefix, "conv2"), out);
        self.norm2.visit_mut(&child(prefix, "norm2"), out);
    }
}

/// Encoder-decoder segmenter with skip connections.
///
/// Encoder level `l` has `base·2^l` channels; the decoder upsamples
/// bilinearly, concatenates `[skip, upsampled]` and applies a double conv.
/// A final 1×1 conv produces one logit per class.
#[derive(Clone, Debug, PartialEq)]
pub struct UNet<T> {
    config: GeneratorConfig,
    down: Vec<DoubleConv<T>>,
    up: Vec<DoubleConv<T>>,
    head: Conv2d<T>,
}

/// Intermediate state of one generator forward pass.
#[derive(Clone, Debug)]
pub struct UNetCache<T> {
    enc: Vec<DoubleConvCache<T>>,
    pools: Vec<Vec<u8>>,
    dec: Vec<DoubleConvCache<T>>,
    head: ConvCache<T>,
}

impl<T: Scalar> UNet<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.depth;
        let mut down = Vec::with_capacity(d + 1);
        down.push(DoubleConv::new(config.in_channels, config.channels(0), rng));
        for l in 1..=d {
            down.push(DoubleConv::new(config.channels(l - 1), config.channels(l), rng));
        }
        let up = (0..d)
            .map(|l| DoubleConv::new(config.channels(l) + config.channels(l + 1), config.channels(l), rng))
            .collect();
        let head = Conv2d::new(config.channels(0), config.num_classes, 1, INIT_STD, rng);
        Ok(Self { config, down, up, head })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn check_image(&self, image: &Array3<T>) -> Result<()> {
        let (c, h, w) = image.dim();
        if c != self.config.in_channels {
            return Err(Error::Config(format!(
                "generator expects {} input channel(s), got {c}",
                self.config.in_channels
            )));
        }
        self.config.check_input((h, w))
    }

    /// Raw class logits `(C, H, W)` plus the state needed by [`UNet::backward`].
    pub fn forward_logits(&self, image: &Array3<T>) -> Result<(Array3<T>, UNetCache<T>)> {
        self.check_image(image)?;
        let d = self.config.depth;
        let mut skips = Vec::with_capacity(d + 1);
        let mut enc = Vec::with_capacity(d + 1);
        let mut pools = Vec::with_capacity(d);
        let (mut x, c0) = self.down[0].forward(image);
        enc.push(c0);
        for l in 1..=d {
            let (p, arg) = max_pool2(&x);
            pools.push(arg);
            skips.push(x);
            let (y, c) = self.down[l].forward(&p);
            enc.push(c);
            x = y;
        }
        let mut dec: Vec<Option<DoubleConvCache<T>>> = (0..d).map(|_| None).collect();
        for l in (0..d).rev() {
            let u = upsample2_bilinear(&x);
            let cat = concat_channels(&skips[l], &u);
            let (y, c) = self.up[l].forward(&cat);
            dec[l] = Some(c);
            x = y;
        }
        let (logits, head) = self.head.forward(&x);
        let cache = UNetCache {
            enc,
            pools,
            dec: dec.into_iter().map(|c| c.expect("every level visited")).collect(),
            head,
        };
        Ok((logits, cache))
    }

    /// Softmax probabilities for a `(1, H, W)` image.
    pub fn forward(&self, image: &Array3<T>) -> Result<ProbabilityMap<T>> {
        let (logits, _) = self.forward_logits(image)?;
        Ok(ProbabilityMap::from_logits(&logits))
    }

    /// Argmax class map; no ROI is involved at inference.
    pub fn predict(&self, image: &Array2<f32>) -> Result<Array2<u8>> {
        let x = image.mapv(|v| T::lit(v as f64)).insert_axis(ndarray::Axis(0));
        Ok(self.forward(&x)?.argmax())
    }

    /// Accumulates parameter gradients for d(loss)/d(logits) into `grads`.
    pub fn backward(&self, cache: &UNetCache<T>, grad_logits: &Array3<T>, grads: &mut Self) {
        let d = self.config.depth;
        let mut g = self
            .head
            .backward(&cache.head, grad_logits, &mut grads.head, true)
            .expect("input grad requested");
        let mut skip_grads = Vec::with_capacity(d);
        for l in 0..d {
            let gc = self.up[l]
                .backward(&cache.dec[l], g, &mut grads.up[l], true)
                .expect("input grad requested");
            let (gs, gu) = split_channels(&gc, self.config.channels(l));
            skip_grads.push(gs);
            g = upsample2_bilinear_backward(&gu);
        }
        for l in (0..=d).rev() {
            if l < d {
                g += &skip_grads[l];
            }
            let want = l > 0;
            let gi = self.down[l].backward(&cache.enc[l], g, &mut grads.down[l], want);
            if l == 0 {
                break;
            }
            g = max_pool2_backward(&gi.expect("input grad requested"), &cache.pools[l - 1]);
        }
    }
}

impl<T: Scalar> Parameterized<T> for UNet<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        for (l, b) in self.down.iter().enumerate() {
            b.visit(&child(prefix, &format!("down{l}")), out);
        }
        for (l, b) in self.up.iter().enumerate() {
            b.visit(&child(prefix, &format!("up{l}")), out);
        }
        self.head.visit(&child(prefix, "head"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        for (l, b) in self.down.iter_mut().enumerate() {
            b.visit_mut(&child(prefix, &format!("down{l}")), out);
        }
        for (l, b) in self.up.iter_mut().enumerate() {
            b.visit_mut(&child(prefix, &format!("up{l}")), out);
        }
        self.head.visit_mut(&child(prefix, "head"), out);
    }
}

impl<T: Scalar> Segmenter for UNet<T> {
    fn segment(&self, image: &Array2<f32>) -> Result<LabelMap> {
        self.predict(image)
    }
}
