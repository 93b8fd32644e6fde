//! Random feature attention with sentential gating for document-level
//! translation, at desk scale.

pub mod attention;
pub mod autodiff;
pub mod benchmark;
pub mod checkpoint;
pub mod cli;
pub mod decoding;
pub mod document_pipeline;
pub mod error;
pub mod fsutil;
pub mod random_features;
pub mod seed;
pub mod transformer;
pub mod vocab;

pub use error::{Error, Result};
