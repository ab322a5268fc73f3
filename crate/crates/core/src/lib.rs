//! Short-term load forecasting benchmark for a synthetic 44-bus distribution
//! feeder: data synthesis, five from-scratch neural forecasters, training and
//! evaluation.

pub mod error;
pub mod evaluator;
pub mod gridgen;
pub mod models;
pub mod numcore;
pub mod trainer;

pub use error::{Error, Result};
