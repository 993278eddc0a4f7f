use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::context::{Model, ModelConfig};
use crate::corpus::{Corpus, Vocab};
use crate::encoder::{EncoderBackend, UtteranceEncoder};
use crate::error::{Error, Result};
use crate::evaluation::split_accuracy;

use super::{adam_step, assemble_batch, slice_chunks, AdamState, Chunk, TrainConfig};

/// Shuffling uses its own ChaCha stream so it never perturbs initialisation.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// A model together with everything needed to run it on new data.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model<f32>,
    pub config: TrainConfig,
    pub label_vocab: Vocab,
    pub topic_vocab: Option<Vocab>,
    pub token_vocab: Vocab,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub best: TrainedModel,
    pub history: Vec<EpochMetrics>,
    /// 0 when no epoch ran (the initial parameters are returned).
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Test accuracy at `best_epoch`.
    pub test_acc: f64,
}

pub fn model_config(corpus: &Corpus, config: &TrainConfig) -> ModelConfig {
    ModelConfig {
        d: config.d,
        h: config.hidden(),
        num_classes: corpus.num_classes(),
        vocab_size: match config.encoder {
            EncoderBackend::Bag => corpus.token_vocab.len(),
            EncoderBackend::Precomputed => 0,
        },
        num_topics: if config.use_topic { corpus.num_topics() } else { 0 },
        combine_mode: config.combine_mode,
        use_topic: config.use_topic,
        encoder: config.encoder,
    }
}

/// Checks that `encoder` matches the configured backend and covers every
/// utterance of the corpus.
pub fn check_encoder(corpus: &Corpus, config: &TrainConfig, encoder: &UtteranceEncoder) -> Result<()> {
    if encoder.backend() != config.encoder {
        return Err(Error::Argument(format!(
            "config asks for the {:?} encoder but a {:?} encoder was supplied",
            config.encoder,
            encoder.backend()
        )));
    }
    if let UtteranceEncoder::Precomputed(file) = encoder {
        if file.dim() != config.d {
            return Err(Error::Argument(format!(
                "embedding file has dim {} but d={}",
                file.dim(),
                config.d
            )));
        }
        let all = corpus.train.iter().chain(&corpus.val).chain(&corpus.test);
        file.check_coverage(all.flat_map(|c| &c.utterances))?;
    }
    Ok(())
}

pub fn initial_model(corpus: &Corpus, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let model = Model::new(model_config(corpus, config), config.seed)?;
    Ok(TrainedModel {
        model,
        config: config.resolved(),
        label_vocab: corpus.label_vocab.clone(),
        topic_vocab: corpus.topic_vocab.clone(),
        token_vocab: corpus.token_vocab.clone(),
    })
}

/// Runs `config.max_epochs` epochs of shuffled mini-batch Adam over
/// training chunks. After every epoch, whole (unsliced) train, validation and
/// test conversations are scored; the parameters with the highest validation
/// accuracy (earliest on ties) are returned with that epoch's test accuracy.
pub fn train(corpus: &Corpus, config: &TrainConfig, encoder: &UtteranceEncoder) -> Result<TrainOutcome> {
    check_encoder(corpus, config, encoder)?;
    let mut current = initial_model(corpus, config)?;
    let vocab = &corpus.token_vocab;

    let mut chunks: Vec<Chunk<'_>> = Vec::new();
    for conv in &corpus.train {
        chunks.extend(slice_chunks(conv, config.chunk_size)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut adam = AdamState::new(&current.model.store);
    let lr = config.learning_rate as f32;

    let mut best = current.clone();
    let mut best_epoch = 0;
    let mut best_val_acc = split_accuracy(&current, &corpus.val, encoder)?;
    let mut test_acc = split_accuracy(&current, &corpus.test, encoder)?;
    let mut history = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        chunks.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut positions = 0usize;
        for (batch_no, group) in chunks.chunks(config.batch_size).enumerate() {
            let batch = assemble_batch(group, vocab, encoder)?;
            let model = &mut current.model;
            let mut g = Graph::new();
            let (loss, _) = model.loss(&mut g, &batch)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is {value} at epoch {epoch}, batch {batch_no}"
                )));
            }
            g.backward(loss, &mut model.store)?;
            adam_step(&mut model.store, &mut adam, lr, &config.adam).map_err(|e| {
                Error::Numeric(format!("epoch {epoch}, batch {batch_no}: {e}"))
            })?;
            let n = batch.mask.iter().filter(|&&m| m).count();
            loss_sum += f64::from(value) * n as f64;
            positions += n;
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss: if positions == 0 { 0.0 } else { loss_sum / positions as f64 },
            train_acc: split_accuracy(&current, &corpus.train, encoder)?,
            val_acc: split_accuracy(&current, &corpus.val, encoder)?,
            test_acc: split_accuracy(&current, &corpus.test, encoder)?,
        };
        debug!(
            "epoch {epoch}: loss {:.4} train {:.4} val {:.4} test {:.4}",
            metrics.train_loss, metrics.train_acc, metrics.val_acc, metrics.test_acc
        );
        if epoch == 1 || metrics.val_acc > best_val_acc {
            best = current.clone();
            best_epoch = epoch;
            best_val_acc = metrics.val_acc;
            test_acc = metrics.test_acc;
        }
        history.push(metrics);
    }
    info!("best epoch {best_epoch}: val {best_val_acc:.4}, test {test_acc:.4}");
    Ok(TrainOutcome {
        best,
        history,
        best_epoch,
        best_val_acc,
        test_acc,
    })
}

/// CSV with columns `epoch,train_loss,val_acc,test_acc`.
pub fn write_history_csv<W: Write>(history: &[EpochMetrics], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_acc,test_acc")?;
    for m in history {
        writeln!(w, "{},{},{},{}", m.epoch, m.train_loss, m.val_acc, m.test_acc)?;
    }
    Ok(())
}
