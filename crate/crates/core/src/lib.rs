//! Restoration of MP3-compressed music with a conditional Wasserstein GAN
//! operating on signed square-root complex spectrograms.

pub mod audio;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod hashing;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
