//! Context-aware segmentation for class-imbalanced images.
//!
//! The crate provides an encoder–decoder segmenter trained either with a
//! global-plus-ROI cross-entropy objective or adversarially against a
//! discriminator that looks at the whole mask and at an ROI crop of it.
//! Numerics are generic over [`Scalar`] (`f32` and `f64`); the aliases at
//! the bottom of this file name the common instantiations.

pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod roi;
mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type UNet32 = models::UNet<f32>;
pub type UNet64 = models::UNet<f64>;
pub type ContextDiscriminator32 = models::ContextDiscriminator<f32>;
pub type ContextDiscriminator64 = models::ContextDiscriminator<f64>;
pub type ProbabilityMap32 = losses::ProbabilityMap<f32>;
pub type ProbabilityMap64 = losses::ProbabilityMap<f64>;
