//! Desk-scale laboratory for backdoor attacks on single-shot face
//! detection: dataset synthesis, trigger poisoning, detector training,
//! attack metrics, and geometric defenses.

pub mod anchors;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod face;
pub mod image;
pub mod metrics;
pub mod poison;
pub mod seed;
pub mod synth;
pub mod trigger;

pub use error::{Error, Result};
