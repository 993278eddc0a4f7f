use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::context::predictions;
use crate::corpus::{Conversation, Vocab};
use crate::encoder::UtteranceEncoder;
use crate::error::{Error, Result};
use crate::training::{assemble_batch, canonical_json, Chunk, TrainConfig, TrainedModel};

/// Fraction of positions with `mask` set where prediction equals gold.
/// Returns 0 when no position is selected.
pub fn accuracy(predictions: &[usize], golds: &[usize], mask: &[bool]) -> Result<f64> {
    if predictions.len() != golds.len() || golds.len() != mask.len() {
        return Err(Error::Argument(format!(
            "length mismatch: {} predictions, {} golds, {} mask bits",
            predictions.len(),
            golds.len(),
            mask.len()
        )));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for ((p, g), &m) in predictions.iter().zip(golds).zip(mask) {
        if m {
            total += 1;
            correct += usize::from(p == g);
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Short stable hash of a training configuration.
pub fn config_fingerprint(config: &TrainConfig) -> String {
    let json = canonical_json(&config.resolved()).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-utterance predictions for each conversation, each processed whole
/// (never chunked).
pub fn predict_conversations(
    trained: &TrainedModel,
    conversations: &[Conversation],
    encoder: &UtteranceEncoder,
) -> Result<Vec<Vec<usize>>> {
    conversations
        .par_iter()
        .map(|conv| {
            let chunk = Chunk::whole(conv)?;
            let batch = assemble_batch(std::slice::from_ref(&chunk), &trained.token_vocab, encoder)?;
            let logits = trained.model.logits(&batch)?;
            Ok(predictions(&logits))
        })
        .collect()
}

pub fn split_accuracy(
    trained: &TrainedModel,
    conversations: &[Conversation],
    encoder: &UtteranceEncoder,
) -> Result<f64> {
    let preds = predict_conversations(trained, conversations, encoder)?;
    let flat_preds: Vec<usize> = preds.into_iter().flatten().collect();
    let golds: Vec<usize> = conversations.iter().flat_map(Conversation::labels).collect();
    accuracy(&flat_preds, &golds, &vec![true; golds.len()])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub split: String,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn from_predictions(
        split: &str,
        predictions: &[usize],
        golds: &[usize],
        labels: &Vocab,
        fingerprint: String,
    ) -> Result<Self> {
        let k = labels.len();
        if predictions.len() != golds.len() {
            return Err(Error::Argument("predictions and golds differ in length".into()));
        }
        let mut confusion = vec![vec![0u64; k]; k];
        for (&p, &g) in predictions.iter().zip(golds) {
            if p >= k || g >= k {
                return Err(Error::Argument(format!("class index out of range for {k} classes")));
            }
            confusion[g][p] += 1;
        }
        let per_class = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let support: u64 = confusion[c].iter().sum();
                let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
                let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
                ClassMetrics {
                    label: labels.name(c).unwrap_or_default().to_string(),
                    precision: ratio(tp, predicted),
                    recall: ratio(tp, support),
                    support,
                }
            })
            .collect();
        let trace: u64 = (0..k).map(|c| confusion[c][c]).sum();
        let total = golds.len() as u64;
        Ok(EvalReport {
            split: split.to_string(),
            accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            per_class,
            confusion,
            fingerprint,
        })
    }
}

pub fn evaluate(
    trained: &TrainedModel,
    conversations: &[Conversation],
    encoder: &UtteranceEncoder,
    split: &str,
) -> Result<EvalReport> {
    let preds: Vec<usize> = predict_conversations(trained, conversations, encoder)?
        .into_iter()
        .flatten()
        .collect();
    let golds: Vec<usize> = conversations.iter().flat_map(Conversation::labels).collect();
    EvalReport::from_predictions(
        split,
        &preds,
        &golds,
        &trained.label_vocab,
        config_fingerprint(&trained.config),
    )
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} accuracy: {:.4}  (config {})",
            self.split, self.accuracy, self.fingerprint
        )?;
        writeln!(f, "{:<16} {:>9} {:>9} {:>8}", "label", "precision", "recall", "support")?;
        for c in &self.per_class {
            writeln!(
                f,
                "{:<16} {:>9.4} {:>9.4} {:>8}",
                c.label, c.precision, c.recall, c.support
            )?;
        }
        Ok(())
    }
}
