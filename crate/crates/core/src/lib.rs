//! Dialogue act classification with speaker-turn embeddings.
//!
//! Each utterance embedding is shifted by one of two learned turn vectors
//! (selected by a bit that flips whenever the speaker changes), optionally by
//! a conversation topic vector, then contextualised by a bidirectional GRU
//! and classified per position.

pub mod autodiff;
pub mod context;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod training;
pub mod turns;

pub use error::{Error, Result};
