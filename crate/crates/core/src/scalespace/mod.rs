//! Scale-space operators and the lifting of flat images onto the semigroup.

mod gaussian;
mod lifting;
mod morphology;

pub use gaussian::{gaussian_blur, gaussian_kernel};
pub use lifting::{downscale_action, lift, lift_backward, lift_traced, LiftTrace, LiftingKind, LiftingSpec, ScalingSpec};
pub use morphology::{morph_backward, quad_close, quad_dilate, quad_erode, quad_open, structuring_radius, MorphOp, MorphTrace};
