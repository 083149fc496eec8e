//! The overapproximator architecture: backbone, lower/upper auxiliaries, clip, linear head.

mod mlp;
mod model;

pub use mlp::{Activation, AuxFamily, Layer, Mlp};
pub use model::{
    Architecture, Component, LinearHead, ModelMeta, PathwayOutputs, Side, SmileModel, TapeParams,
};
