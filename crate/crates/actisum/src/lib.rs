//! Actigraphy-to-language pipeline.
//!
//! Raw minute-level activity sequences are encoded by a frozen patch
//! transformer, projected by a trainable affine map into the embedding space
//! of a frozen word-level decoder, and used as a prefix for autoregressive
//! generation of daily behavioral summaries. The crate also carries the full
//! dataset-construction, deterministic labeling, training, evaluation and
//! embedding-analysis stack, exposed through the `actisum` binary.

pub mod analysis;
pub mod data;
pub mod encoder;
pub mod error;
pub mod labeler;
pub mod metrics;
pub mod nn;

pub mod transformer;

pub use error::{Error, Result};
