//! Predicting the relative abstractness of paired images and texts.
//!
//! A multimodal autoencoder embeds an image and its accompanying text into
//! one vector; a small classification head on that vector predicts which
//! of the two is more abstract, or that they match.

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod train;
pub mod vocab;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Scalar;

/// Single-precision parameter store used for training and inference.
pub type ParamStore32 = nn::ParameterStore<f32>;
/// Double-precision parameter store used by the gradient checker.
pub type ParamStore64 = nn::ParameterStore<f64>;
/// Training-precision sample.
pub type Sample32 = model::Sample<f32>;
