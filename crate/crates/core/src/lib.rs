//! Training small dense networks with certified global relational properties.
//!
//! A [`smile::SmileModel`] confines its latent embedding to a box produced by two
//! simple auxiliary networks. Verification can then ignore the backbone and
//! reason only about the auxiliaries and the linear head, which the [`milp`]
//! module encodes exactly. The [`training`] pipeline alternates gradient steps
//! with counterexample generation until no violating input pair remains.

pub mod bench;
pub mod error;
pub mod milp;
pub mod numcore;
pub mod property;
pub mod smile;
pub mod training;

pub use error::{Error, Result};
pub use property::{Direction, InputBox, PropertyKind, PropertySpec, RelationalProperty};
pub use smile::{Architecture, Side, SmileModel};
