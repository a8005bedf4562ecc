use ndarray::{Array1, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::INIT_STD;
use crate::nn::ops::{
    avg_pool2, avg_pool2_backward, global_avg_pool, global_avg_pool_backward, leaky_relu,
    leaky_relu_backward, sigmoid,
};
use crate::nn::{child, Conv2d, ConvCache, Linear, Param, Parameterized};
use crate::{Error, Result, Scalar};

/// Length of the global and local feature vectors.
pub const FEATURE_DIM: usize = 64;
/// Kernel sizes of the three conv layers in each feature extractor.
pub const CONV_KERNELS: [usize; 3] = [9, 5, 5];
/// Output channels of the three conv layers in each feature extractor.
pub const CONV_CHANNELS: [usize; 3] = [32, 64, 64];
/// Width of the first fully connected layer of the fixed head.
pub const FC_HIDDEN: usize = 64;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    FullyConnected,
    Gap,
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadKind::FullyConnected => "fully_connected",
            HeadKind::Gap => "gap",
        })
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fully_connected" | "fc" => Ok(HeadKind::FullyConnected),
            "gap" => Ok(HeadKind::Gap),
            other => Err(Error::Config(format!("unknown discriminator head '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiDims {
    Fixed(usize, usize),
    Variable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDiscriminatorConfig {
    pub num_classes: usize,
    pub full_dims: (usize, usize),
    pub roi_dims: RoiDims,
    /// Head of the local branch; the global branch always uses the
    /// fully connected head.
    pub head: HeadKind,
}

/// Spatial size after the three 2×2 pools (floor at each stage).
fn pooled(dims: (usize, usize)) -> (usize, usize) {
    (dims.0 / 8, dims.1 / 8)
}

fn check_min_dims(dims: (usize, usize), what: &str) -> Result<()> {
    let (h, w) = pooled(dims);
    if h == 0 || w == 0 {
        return Err(Error::Config(format!(
            "{what} {}x{} is below the 8x8 minimum of the conv stack",
            dims.0, dims.1
        )));
    }
    Ok(())
}

impl ContextDiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("discriminator needs at least 2 classes".into()));
        }
        check_min_dims(self.full_dims, "discriminator input")?;
        match (self.roi_dims, self.head) {
            (RoiDims::Variable, HeadKind::FullyConnected) => Err(Error::Config(
                "variable ROI dimensions require the gap head".into(),
            )),
            (RoiDims::Fixed(h, w), _) => {
                if h > self.full_dims.0 || w > self.full_dims.1 {
                    return Err(Error::Config(format!("ROI {h}x{w} larger than the input")));
                }
                check_min_dims((h, w), "ROI")
            }
            (RoiDims::Variable, HeadKind::Gap) => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum ExtractorHead<T> {
    FullyConnected {
        input_dims: (usize, usize),
        hidden: Linear<T>,
        out: Linear<T>,
    },
    Gap {
        out: Linear<T>,
    },
}

/// Three conv(k) → LeakyReLU → avgpool stages followed by a head that
/// emits a [`FEATURE_DIM`]-vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor<T> {
    convs: Vec<Conv2d<T>>,
    head: ExtractorHead<T>,
}

#[derive(Clone, Debug)]
struct StageCache<T> {
    conv: ConvCache<T>,
    act: Array3<T>,
}

#[derive(Clone, Debug)]
pub struct ExtractorCache<T> {
    stages: Vec<StageCache<T>>,
    pooled_dims: (usize, usize, usize),
    head_input: Array1<T>,
    hidden_act: Option<Array1<T>>,
}

impl<T: Scalar> FeatureExtractor<T> {
    fn convs<R: Rng + ?Sized>(in_channels: usize, rng: &mut R) -> Vec<Conv2d<T>> {
        let mut cin = in_channels;
        CONV_KERNELS
            .iter()
            .zip(CONV_CHANNELS)
            .map(|(&k, cout)| {
                let c = Conv2d::new(cin, cout, k, INIT_STD, rng);
                cin = cout;
                c
            })
            .collect()
    }

    /// Fixed head: flatten → FC → LeakyReLU → FC → 64, sized for `input_dims`.
    pub fn fully_connected<R: Rng + ?Sized>(
        in_channels: usize,
        input_dims: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        check_min_dims(input_dims, "feature extractor input")?;
        let convs = Self::convs(in_channels, rng);
        let (ph, pw) = pooled(input_dims);
        let flat = CONV_CHANNELS[2] * ph * pw;
        Ok(Self {
            convs,
            head: ExtractorHead::FullyConnected {
                input_dims,
                hidden: Linear::new(flat, FC_HIDDEN, INIT_STD, rng),
                out: Linear::new(FC_HIDDEN, FEATURE_DIM, INIT_STD, rng),
            },
        })
    }

    /// Size-agnostic head: global average pooling → FC 64 → 64.
    pub fn gap<R: Rng + ?Sized>(in_channels: usize, rng: &mut R) -> Self {
        let convs = Self::convs(in_channels, rng);
        Self {
            convs,
            head: ExtractorHead::Gap {
                out: Linear::new(CONV_CHANNELS[2], FEATURE_DIM, INIT_STD, rng),
            },
        }
    }

    pub fn head_kind(&self) -> HeadKind {
        match self.head {
            ExtractorHead::FullyConnected { .. } => HeadKind::FullyConnected,
            ExtractorHead::Gap { .. } => HeadKind::Gap,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.convs[0].in_channels()
    }

    /// `(kernel, out_channels)` of each conv layer, in order.
    pub fn conv_spec(&self) -> Vec<(usize, usize)> {
        self.convs.iter().map(|c| (c.kernel(), c.out_channels())).collect()
    }

    pub fn forward(&self, x: &Array3<T>) -> Result<(Array1<T>, ExtractorCache<T>)> {
        let (c, h, w) = x.dim();
        if c != self.in_channels() {
            return Err(Error::shape(self.in_channels(), c));
        }
        match &self.head {
            ExtractorHead::FullyConnected { input_dims, .. } if *input_dims != (h, w) => {
                return Err(Error::shape(*input_dims, (h, w)));
            }
            _ => check_min_dims((h, w), "feature extractor input")?,
        }
        let slope = T::lit(LEAKY_SLOPE);
        let mut stages = Vec::with_capacity(3);
        let mut cur = x.clone();
        for conv in &self.convs {
            let (y, cache) = conv.forward(&cur);
            let act = leaky_relu(y, slope);
            cur = avg_pool2(&act);
            stages.push(StageCache { conv: cache, act });
        }
        let pooled_dims = cur.dim();
        let (feat, head_input, hidden_act) = match &self.head {
            ExtractorHead::FullyConnected { hidden, out, .. } => {
                let flat = Array1::from_iter(cur.iter().copied());
                let a = leaky_relu(hidden.forward(&flat), slope);
                (out.forward(&a), flat, Some(a))
            }
            ExtractorHead::Gap { out } => {
                let g = global_avg_pool(&cur);
                (out.forward(&g), g, None)
            }
        };
        Ok((
            feat,
            ExtractorCache {
                stages,
                pooled_dims,
                head_input,
                hidden_act,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &ExtractorCache<T>,
        grad: &Array1<T>,
        grads: &mut Self,
        want_input: bool,
    ) -> Option<Array3<T>> {
        let slope = T::lit(LEAKY_SLOPE);
        let mut g = match (&self.head, &mut grads.head) {
            (
                ExtractorHead::FullyConnected { hidden, out, .. },
                ExtractorHead::FullyConnected {
                    hidden: gh, out: go, ..
                },
            ) => {
                let a = cache.hidden_act.as_ref().expect("fc cache");
                let ga = out.backward(a, grad, go);
                let ga = leaky_relu_backward(a, ga, slope);
                let gf = hidden.backward(&cache.head_input, &ga, gh);
                gf.into_shape_with_order(cache.pooled_dims).expect("flatten shape")
            }
            (ExtractorHead::Gap { out }, ExtractorHead::Gap { out: go }) => {
                let gg = out.backward(&cache.head_input, grad, go);
                global_avg_pool_backward(&gg, cache.pooled_dims)
            }
            _ => unreachable!("gradient buffer mirrors the model"),
        };
        for (i, (conv, stage)) in self.convs.iter().zip(&cache.stages).enumerate().rev() {
            let (_, ah, aw) = stage.act.dim();
            let ga = avg_pool2_backward(&g, (ah, aw));
            let gz = leaky_relu_backward(&stage.act, ga, slope);
            let need = i > 0 || want_input;
            match conv.backward(&stage.conv, &gz, &mut grads.convs[i], need) {
                Some(gi) => g = gi,
                None => return None,
            }
        }
        Some(g)
    }
}

impl<T: Scalar> Parameterized<T> for FeatureExtractor<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&child(prefix, &format!("conv{i}")), out);
        }
        match &self.head {
            ExtractorHead::FullyConnected { hidden, out: o, .. } => {
                hidden.visit(&child(prefix, "fc1"), out);
                o.visit(&child(prefix, "fc2"), out);
            }
            ExtractorHead::Gap { out: o } => o.visit(&child(prefix, "fc"), out),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit_mut(&child(prefix, &format!("conv{i}")), out);
        }
        match &mut self.head {
            ExtractorHead::FullyConnected { hidden, out: o, .. } => {
                hidden.visit_mut(&child(prefix, "fc1"), out);
                o.visit_mut(&child(prefix, "fc2"), out);
            }
            ExtractorHead::Gap { out: o } => o.visit_mut(&child(prefix, "fc"), out),
        }
    }
}

/// Real/fake classifier over whole masks and their ROI crops:
/// `sigmoid(FC([global(mask) ‖ local(roi)]))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextDiscriminator<T> {
    config: ContextDiscriminatorConfig,
    global: FeatureExtractor<T>,
    local: FeatureExtractor<T>,
    classifier: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache<T> {
    global: ExtractorCache<T>,
    local: ExtractorCache<T>,
    joint: Array1<T>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorOutput<T> {
    pub score: T,
    pub logit: T,
    pub cache: DiscriminatorCache<T>,
}

impl<T: Scalar> ContextDiscriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: ContextDiscriminatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config.num_classes;
        let global = FeatureExtractor::fully_connected(c, config.full_dims, rng)?;
        let local = match (config.head, config.roi_dims) {
            (HeadKind::FullyConnected, RoiDims::Fixed(h, w)) => {
                FeatureExtractor::fully_connected(c, (h, w), rng)?
            }
            _ => FeatureExtractor::gap(c, rng),
        };
        let classifier = Linear::new(2 * FEATURE_DIM, 1, INIT_STD, rng);
        Ok(Self {
            config,
            global,
            local,
            classifier,
        })
    }

    pub fn config(&self) -> &ContextDiscriminatorConfig {
        &self.config
    }

    pub fn global_extractor(&self) -> &FeatureExtractor<T> {
        &self.global
    }

    pub fn local_extractor(&self) -> &FeatureExtractor<T> {
        &self.local
    }

    pub fn classifier(&self) -> &Linear<T> {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut Linear<T> {
        &mut self.classifier
    }

    pub fn global_features(&self, mask: &Array3<T>) -> Result<Array1<T>> {
        Ok(self.global.forward(mask)?.0)
    }

    pub fn local_features(&self, roi_mask: &Array3<T>) -> Result<Array1<T>> {
        Ok(self.local.forward(roi_mask)?.0)
    }

    pub fn forward(&self, full_mask: &Array3<T>, roi_mask: &Array3<T>) -> Result<DiscriminatorOutput<T>> {
        let (gf, gc) = self.global.forward(full_mask)?;
        let (lf, lc) = self.local.forward(roi_mask)?;
        let joint = ndarray::concatenate(ndarray::Axis(0), &[gf.view(), lf.view()]).expect("1-d vectors");
        let logit = self.classifier.forward(&joint)[0];
        Ok(DiscriminatorOutput {
            score: sigmoid(logit),
            logit,
            cache: DiscriminatorCache {
                global: gc,
                local: lc,
                joint,
            },
        })
    }

    /// Backpropagates d(loss)/d(logit). Returns gradients with respect to
    /// the full mask and the ROI mask when `want_input` is set.
    pub fn backward(
        &self,
        cache: &DiscriminatorCache<T>,
        grad_logit: T,
        grads: &mut Self,
        want_input: bool,
    ) -> Option<(Array3<T>, Array3<T>)> {
        let gj = self
            .classifier
            .backward(&cache.joint, &Array1::from_elem(1, grad_logit), &mut grads.classifier);
        let gg = gj.slice(ndarray::s![..FEATURE_DIM]).to_owned();
        let gl = gj.slice(ndarray::s![FEATURE_DIM..]).to_owned();
        let dg = self.global.backward(&cache.global, &gg, &mut grads.global, want_input);
        let dl = self.local.backward(&cache.local, &gl, &mut grads.local, want_input);
        dg.zip(dl)
    }
}

impl<T: Scalar> Parameterized<T> for ContextDiscriminator<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.global.visit(&child(prefix, "psi_g"), out);
        self.local.visit(&child(prefix, "psi_l"), out);
        self.classifier.visit(&child(prefix, "psi_c"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.global.visit_mut(&child(prefix, "psi_g"), out);
        self.local.visit_mut(&child(prefix, "psi_l"), out);
        self.classifier.visit_mut(&child(prefix, "psi_c"), out);
    }
}
