//! Minimal CPU layer library with explicit forward/backward passes.
//!
//! Every forward call returns the intermediate state its backward pass
//! needs, so a model stays immutable while gradients are computed and one
//! model can be evaluated several times per optimization step.

mod adam;
mod conv;
mod linear;
mod norm;
pub mod ops;
mod param;

pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2d, ConvCache};
pub use linear::Linear;
pub use norm::{InstanceNorm, NormCache};
pub use param::{Param, Parameterized};

pub(crate) use param::child;
