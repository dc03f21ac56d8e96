//! Pocket-ligand language model with a parallel token/number channel.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod chem;
pub mod design;
pub mod dock;
pub mod evaluate;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod seqcodec;
pub mod train;

pub use scalar::Scalar;

pub type Weights32 = model::Weights<f32>;
pub type Weights64 = model::Weights<f64>;
pub type Checkpoint32 = model::Checkpoint<f32>;
pub type Checkpoint64 = model::Checkpoint<f64>;
pub type TrainState32 = train::TrainState<f32>;
pub type TrainState64 = train::TrainState<f64>;
pub type RlState32 = design::RlState<f32>;
pub type RlState64 = design::RlState<f64>;
