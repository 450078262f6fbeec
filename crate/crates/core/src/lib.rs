//! Weakly-supervised patch annotation for fundus-style images.
//!
//! Images are tiled into patches that receive preliminary labels from
//! image-level diagnoses and coarse lesion regions. Several patch-embedding
//! networks are trained with a combined supervised-contrastive and
//! cross-entropy objective, and the unlabeled patches are then annotated by
//! top-K cosine-neighbor voting in each embedding space followed by a
//! majority vote that may abstain.

pub mod ensemble;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod numerics;
pub mod patch_grid;
pub mod pen;
pub mod pipeline;
pub mod raster;

pub use error::{Result, SafeError};
pub use labels::{Annotation, Class, ImageLabel, PrelimLabel};
