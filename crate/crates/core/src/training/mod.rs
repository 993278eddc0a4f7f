//! Chunking, batching, Adam, the epoch loop and checkpoints.

mod adam;
mod batch;
mod checkpoint;
mod chunk;
mod config;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use batch::assemble_batch;
pub use checkpoint::{canonical_json, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use chunk::{slice_chunks, Chunk};
pub use config::{AdamConfig, TrainConfig, DEFAULT_CHUNK_SIZE, LONG_CHUNK_SIZE};
pub use trainer::{
    check_encoder, initial_model, model_config, train, write_history_csv, EpochMetrics, TrainOutcome,
    TrainedModel,
};
