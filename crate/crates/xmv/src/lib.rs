//! Cross-modal face verification toolkit.
//!
//! Matches ID-document face embeddings against selfie embeddings across
//! adolescent age gaps: loads paired two-modality datasets, fine-tunes an
//! affine embedding head with cross-modal semi-hard triplet mining, builds
//! hard validation pairs, and computes exact verification metrics (TAR@FAR,
//! ROC, d-prime). A synthetic generator reproduces the dataset structure at
//! desk scale so the full pipeline is runnable end to end.

pub mod cli;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod matching;
pub mod mining;
pub mod report;
pub mod synth;
pub mod trainer;
pub mod valbuilder;

pub use error::{Error, Result};
