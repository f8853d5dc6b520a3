//! Counterfactual explanations for out-of-distribution samples via a
//! latent space split into discriminative and non-discriminative dims.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod counterfactual;
pub mod dataset;
pub mod density;
pub mod error;
pub mod gaussian;
pub mod partition;
pub mod pipeline;
pub mod projection;
pub mod report;
pub mod stats;
pub mod svg;

pub use error::{Error, ErrorClass, Result};
