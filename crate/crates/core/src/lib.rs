//! Photon statistics, detector models, nonclassicality witnesses and an
//! interpretable algebraic classifier for quantum-optical states.

pub mod alcla;
pub mod baselines;
pub mod dataset;
pub mod detectors;
pub mod error;
pub mod fockstats;
pub mod interferometer;
pub mod linalg;
pub mod special;
pub mod witnesses;

pub use error::{Error, Result};
