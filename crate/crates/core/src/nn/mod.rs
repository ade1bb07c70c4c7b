//! Layers of the scale-equivariant networks and their sequential composition.

mod batchnorm;
mod dense;
mod loss;
mod network;
mod pool;
mod xcorr;

pub use batchnorm::{BatchNorm, BnCache, BN_EPS};
pub use dense::Dense;
pub use loss::{argmax, argmax_pixels, softmax, softmax_xent, softmax_xent_pixels};
pub use network::{Activation, LayerSpec, Mode, NamedTensor, Network, NetworkSpec, Target, Task};
pub use pool::{global_maxpool, global_maxpool_backward, relu, relu_backward, scale_maxpool, scale_maxpool_backward};
pub use xcorr::{scale_xcorr, scale_xcorr_backward, SemigroupFilter};
