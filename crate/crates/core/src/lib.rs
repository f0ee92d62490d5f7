//! Dyadic relationship classification from per-clip multimodal features.
//!
//! The crate builds the full pipeline at desk scale: a reverse-mode autodiff
//! tensor core, dataset handling with a synthetic dyadic generator, a
//! node-edge attention graph over the two interactants' modality nodes, a
//! periodic temporal encoder over clip indices, dual direction-specific
//! classification heads, K-fold training/evaluation with recall/UAR metrics,
//! and inference-time masking ablations scored by prediction fidelity.

pub mod ablation;
pub mod data;
pub mod model;
pub mod ne_agn;
pub mod seeding;
pub mod temporal;
pub mod tensor;
pub mod train;

pub use tensor::{Tensor, TensorError};
