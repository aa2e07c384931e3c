//! Embedding-space unsupervised domain adaptation with caption pseudo-labels,
//! CLIP reliability weights and soft contrastive learning.
//!
//! Pipeline: [`pseudolabel`] trains a text classifier on source captions and
//! labels the target set; [`uncertainty`] scores each target sample by its
//! CLIP image-caption agreement; [`trainer`] fits a small vision model on
//! source labels plus reweighted target pseudo-labels, optionally with the
//! contrastive terms of [`contrastive`]. All differentiation runs on the
//! tape in [`numerics`].

pub mod cli;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod numerics;
pub mod pseudolabel;
pub mod seed;
pub mod trainer;
pub mod uncertainty;

pub use error::{Result, TrustError};
