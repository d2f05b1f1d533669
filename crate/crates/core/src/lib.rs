//! Anomaly detection on contaminated training data.
//!
//! A dual-loss backbone scores every sample with a normal loss `L_n` and an
//! anomaly loss `L_a`. Training alternates between labeling the highest
//! scoring fraction of each mini-batch as anomalous and a gradient step on
//! the resulting joint loss.

pub mod adam;
pub mod autodiff;
pub mod backbones;
pub mod data;
pub mod error;
pub mod eval;
pub mod params;
pub mod rng;
pub mod theory;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
