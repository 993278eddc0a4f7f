use serde::{Deserialize, Serialize};

use crate::encoder::EncoderBackend;
use crate::error::{Error, Result};
use crate::turns::CombineMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Everything that determines a training run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Training conversations are cut into chunks of at most this many
    /// utterances. Evaluation always uses whole conversations.
    pub chunk_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub combine_mode: CombineMode,
    pub use_topic: bool,
    pub encoder: EncoderBackend,
    pub d: usize,
    /// GRU hidden size; `None` means `d`.
    pub h: Option<usize>,
    pub adam: AdamConfig,
}

/// Chunk size for two-party telephone-style conversations.
pub const DEFAULT_CHUNK_SIZE: usize = 128;
/// Chunk size for long multi-party meetings.
pub const LONG_CHUNK_SIZE: usize = 350;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            chunk_size: DEFAULT_CHUNK_SIZE,
            batch_size: 8,
            learning_rate: 1e-4,
            max_epochs: 50,
            seed: 0,
            combine_mode: CombineMode::Sum,
            use_topic: false,
            encoder: EncoderBackend::Bag,
            d: 64,
            h: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn hidden(&self) -> usize {
        self.h.unwrap_or(self.d)
    }

    /// Copy with `h` filled in.
    pub fn resolved(&self) -> Self {
        TrainConfig {
            h: Some(self.hidden()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("chunk_size", self.chunk_size),
            ("batch_size", self.batch_size),
            ("d", self.d),
            ("h", self.hidden()),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Argument(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
            return Err(Error::Argument(format!("invalid Adam settings {:?}", self.adam)));
        }
        Ok(())
    }
}
