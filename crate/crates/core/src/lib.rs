//! Jewelry image classification and captioning from scratch.

pub mod capnet;
pub mod dataforge;
pub mod error;
pub mod evalkit;
pub mod lexicon;
pub mod nnlayers;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
