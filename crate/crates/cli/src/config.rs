use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use turnwise::corpus::Split;
use turnwise::encoder::EncoderBackend;
use turnwise::evaluation::{normalize_sizes, SyntheticRule, SyntheticSpec};
use turnwise::training::{canonical_json, TrainConfig};
use turnwise::turns::CombineMode;

/// Bad invocation or configuration; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Everything a run needs. Written back out as `run.json`, which can be
/// passed to `--config` to repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<String>,
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub split: Split,
    pub sizes: Vec<usize>,
    /// Conversations shown by `preprocess`.
    pub preview: usize,
    pub synth: SyntheticSpec,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            data: None,
            embeddings: None,
            checkpoint: None,
            out: PathBuf::from("out"),
            split: Split::Test,
            sizes: vec![4, 8, 16, 32, 64, 128],
            preview: 3,
            synth: SyntheticSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Run configuration (JSON); flags below take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus directory with train/val/test .jsonl files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Precomputed utterance embeddings (text or binary).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory for artifacts and run.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<Split>,
    /// Comma-separated chunk sizes for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Training seed (the generator seed for `synth`).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub combine_mode: Option<CombineMode>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub use_topic: Option<bool>,
    #[arg(long)]
    pub encoder: Option<EncoderBackend>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Embedding size d (also the GRU hidden size unless set in the config).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Synthetic labelling rule for `synth`.
    #[arg(long)]
    pub rule: Option<SyntheticRule>,
    /// Number of topics for `synth`.
    #[arg(long)]
    pub num_topics: Option<usize>,
}

impl RunConfig {
    /// Reads `--config` (if any), applies flag overrides and checks that
    /// everything `command` needs is present.
    pub fn resolve(command: &str, flags: &Overrides) -> anyhow::Result<Self> {
        let mut config = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(recorded) = &config.command {
            if recorded != command {
                return Err(usage(format!(
                    "config was written for `{recorded}`, not `{command}`"
                )));
            }
        }
        config.command = Some(command.to_string());
        config.apply(command, flags);
        config.train = config.train.resolved();
        config.validate(command)?;
        Ok(config)
    }

    fn apply(&mut self, command: &str, f: &Overrides) {
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut self.data, &f.data);
        set(&mut self.embeddings, &f.embeddings);
        set(&mut self.checkpoint, &f.checkpoint);
        if let Some(out) = &f.out {
            self.out = out.clone();
        }
        if let Some(split) = f.split {
            self.split = split;
        }
        if let Some(sizes) = &f.sizes {
            self.sizes = sizes.clone();
        }
        let t = &mut self.train;
        if let Some(v) = f.chunk_size {
            t.chunk_size = v;
        }
        if let Some(v) = f.seed {
            if command == "synth" {
                self.synth.seed = v;
            } else {
                t.seed = v;
            }
        }
        if let Some(v) = f.combine_mode {
            t.combine_mode = v;
        }
        if let Some(v) = f.use_topic {
            t.use_topic = v;
        }
        if let Some(v) = f.encoder {
            t.encoder = v;
        }
        if let Some(v) = f.epochs {
            t.max_epochs = v;
        }
        if let Some(v) = f.lr {
            t.learning_rate = v;
        }
        if let Some(v) = f.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = f.dim {
            t.d = v;
        }
        if let Some(v) = f.rule {
            self.synth.rule = v;
        }
        if let Some(v) = f.num_topics {
            self.synth.num_topics = v;
        }
    }

    fn validate(&self, command: &str) -> anyhow::Result<()> {
        if command == "synth" {
            return self.synth.validate().map_err(|e| usage(e.to_string()));
        }
        let data = self
            .data
            .as_deref()
            .ok_or_else(|| usage(format!("`{command}` needs --data")))?;
        if !data.is_dir() {
            return Err(usage(format!("data directory {} does not exist", data.display())));
        }
        match command {
            "train" | "ablate" | "sweep" => {
                self.train.validate().map_err(|e| usage(e.to_string()))?;
                if self.train.encoder == EncoderBackend::Precomputed {
                    self.embedding_path()?;
                }
                if command == "sweep" {
                    normalize_sizes(&self.sizes).map_err(|e| usage(e.to_string()))?;
                }
            }
            "eval" => {
                let path = self
                    .checkpoint
                    .as_deref()
                    .ok_or_else(|| usage("`eval` needs --checkpoint"))?;
                if !path.is_file() {
                    return Err(usage(format!("checkpoint {} does not exist", path.display())));
                }
                if let Some(path) = &self.embeddings {
                    existing_file(path, "embedding file")?;
                }
            }
            "preprocess"
                if self.train.chunk_size == 0 => {
                    return Err(usage("chunk_size must be positive"));
                }
            _ => {}
        }
        Ok(())
    }

    /// The embedding file, which must exist.
    pub fn embedding_path(&self) -> anyhow::Result<&Path> {
        let path = self
            .embeddings
            .as_deref()
            .ok_or_else(|| usage("the precomputed encoder needs --embeddings <file>"))?;
        existing_file(path, "embedding file")?;
        Ok(path)
    }

    /// Creates the output directory and writes `run.json` into it.
    pub fn write_snapshot(&self) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .map_err(|e| usage(format!("cannot create output directory {}: {e}", self.out.display())))?;
        let path = self.out.join("run.json");
        fs::write(&path, canonical_json(self)? + "\n")?;
        Ok(path)
    }
}

fn existing_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"train": {"seed": 3, "chunk_size": 10}, "out": "x"}"#).unwrap();
        let flags = Overrides {
            config: Some(cfg),
            seed: Some(9),
            ..Overrides::default()
        };
        let resolved = RunConfig::resolve("synth", &flags).unwrap();
        assert_eq!(resolved.synth.seed, 9);
        assert_eq!(resolved.train.seed, 3);
        assert_eq!(resolved.train.chunk_size, 10);
        assert_eq!(resolved.train.h, Some(resolved.train.d));
        assert_eq!(resolved.out, PathBuf::from("x"));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"trian": {}}"#).unwrap();
        let flags = Overrides {
            config: Some(cfg),
            ..Overrides::default()
        };
        let err = RunConfig::resolve("synth", &flags).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn snapshot_resolves_to_itself() {
        let dir = tempfile::tempdir().unwrap();
        let flags = Overrides {
            out: Some(dir.path().to_path_buf()),
            lr: Some(0.5),
            ..Overrides::default()
        };
        let first = RunConfig::resolve("synth", &flags).unwrap();
        let snapshot = first.write_snapshot().unwrap();
        let again = RunConfig::resolve(
            "synth",
            &Overrides {
                config: Some(snapshot),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(first, again);
    }
}
