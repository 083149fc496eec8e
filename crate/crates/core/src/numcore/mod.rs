//! Dense linear algebra and a small reverse-mode differentiation tape.

mod mat;
mod tape;

pub use mat::{affine, clip, relu, relu_scalar, Mat};
pub(crate) use mat::{affine_unchecked, dot_with_bias};
pub use tape::{Gradients, NodeId, ParamId, Tape};
