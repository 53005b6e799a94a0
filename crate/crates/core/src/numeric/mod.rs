//! Dense arrays, small MLPs, reverse-mode gradients and Adam.

pub mod activation;
pub mod adam;
mod array;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
mod params;
mod tape;

pub use activation::{mish, sigmoid, softplus};
pub use adam::{AdamConfig, AdamState};
pub use array::DenseArray;
pub use mlp::{HiddenActivation, Mlp, MlpShape, OutputActivation};
pub use params::{Gradients, ParamBlock, ParamId, ParamStore};
pub use tape::{Tape, Var};
