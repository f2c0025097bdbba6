//! Bidirectional decoding for action-chunking policies.

pub mod chain;
pub mod chunk;
pub mod criteria;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod synthetic;

pub use chunk::{step_distance, overlap_pairs, Action, ActionChunk, ChunkSampler, DecisionMemory, ObservationHistory, SourceTag};
pub use error::{BidError, Result};
