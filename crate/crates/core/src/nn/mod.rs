//! Minimal dense/convolutional network engine: tensors, kernels, a
//! reverse-mode tape and the ADAM optimizer.

mod adam;
mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState, Params};
pub use ops::{conv2d_forward, dense_forward, maxpool2d, sigmoid, upsample2d, Activation};
pub use tape::{Gradients, Tape, Var, BCE_EPS};
pub use tensor::Tensor;

pub(crate) use ops::{conv2d_fwd, linear_fwd, maxpool_fwd};
pub(crate) use tape::{bce_value, kl_value};
