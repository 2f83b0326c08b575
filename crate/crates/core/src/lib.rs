//! Fado detection from 10-second audio excerpts.
//!
//! The pipeline is: decode and resample a song ([`audio_io`]), choose a
//! 10-second window ([`excerpt`]), compute a 32-dimensional descriptor
//! ([`features`], built on [`dsp`]), and classify it with an RBF-kernel
//! support-vector machine ([`svm`]). [`eval`] holds the cross-validation and
//! train/test harness, [`cache`] the on-disk feature table.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod audio_io;
pub mod cache;
pub mod dsp;
mod error;
pub mod eval;
pub mod excerpt;
pub mod features;
pub mod svm;

pub use audio_io::{AudioBuffer, CANONICAL_SAMPLE_RATE};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, EvalReport};
pub use excerpt::{Excerpt, ExcerptStrategy};
pub use features::{FeatureExtractor, FeatureVector, FEATURE_DIM};
pub use svm::{Label, LabeledDataset, SvmModel, SvmParams};
