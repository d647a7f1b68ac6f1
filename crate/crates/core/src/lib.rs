//! A reversible, memory-augmented byte-level transformer that is fine-tuned
//! to compress text hierarchically and to reconstruct it by running its
//! coupling blocks in reverse.
//!
//! Start with the runnable programs in `examples/`.

pub mod cli;
pub mod error;
pub mod eval;
pub mod hierpair;
pub mod numcore;
pub mod revformer;
pub mod trainer;

pub use error::{Error, Result};
