//! The reversible memory-augmented decoder: configuration, parameters,
//! additive coupling blocks, segmented execution and checkpoints.

pub mod checkpoint;
mod config;
mod coupling;
mod decode;
mod model;
mod params;

pub use config::{ModelConfig, Precision};
pub use coupling::{couple, uncouple, StreamPair};
pub use model::{
    argmax, base_logits, flipped_forward, forward_segmented, forward_segmented_with, generate_uncached, Direction, Net,
    SegmentTrace, SegmentedHidden, SegmentedOutput, Stream,
};
pub use decode::{generate, IncrementalDecoder};
pub use params::{
    BaseWeights, BlockAdapter, Bound, BoundAdapter, BoundLayer, LayerWeights, RevformerParams, MEMORY_INIT_STD,
};
