//! Closed-form oracle velocity fields for rectified-flow flow matching over a
//! finite dataset, with sweep diagnostics, a small trainable MLP, and Euler
//! samplers that can hand over between oracle and model.

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod oracle;
pub mod par;
pub mod sampler;
pub mod schedule;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
