//! Segmentation generator and context discriminator.

mod discriminator;
mod threshold;
mod unet;

pub use discriminator::{
    ContextDiscriminator, ContextDiscriminatorConfig, DiscriminatorCache, DiscriminatorOutput,
    ExtractorCache, FeatureExtractor, HeadKind, RoiDims, CONV_CHANNELS, CONV_KERNELS, FEATURE_DIM,
    FC_HIDDEN, LEAKY_SLOPE,
};
pub use threshold::ThresholdSegmenter;
pub use unet::{GeneratorConfig, UNet, UNetCache};

/// Standard deviation of the normal initializer for every conv and FC layer.
pub const INIT_STD: f64 = 0.02;
