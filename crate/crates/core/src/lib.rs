//! One-step detection of misspelled handwritten words.
//!
//! A recognizer (convolutional blocks + bidirectional recurrent block, trained
//! with CTC) is truncated below its character classifier. Its per-timestep
//! features are compressed, stacked with the one-hot matrix of the expected
//! text into a two-channel square image, and a small convolutional head scores
//! the probability that the handwriting does not match the text.

pub mod alphabet;
pub mod checkpoint;
pub mod classifier;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod hwr;
pub mod render;
pub mod textgen;

pub use alphabet::Alphabet;
pub use error::{Error, Result};
