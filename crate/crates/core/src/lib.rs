//! Scale-equivariant neural networks built on the dyadic scale–translation
//! semigroup, with Gaussian and quadratic morphological scale-space liftings.

// `!(x > 0.0)` style guards are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod real;
pub mod scalespace;
pub mod semigroup;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use semigroup::{act, compose, receptive_field_side, SemigroupElement};
pub use tensor::{Image, ScaleStack};
