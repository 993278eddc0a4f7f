use crate::autodiff::IGNORE_INDEX;
use crate::error::{Error, Result};

use super::{Conversation, Utterance, Vocab, PAD};

/// Sequences padded to a common length. Row `b`, position `t` is real iff
/// `mask[b][t]`; padded positions carry the PAD token and the ignore label.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub target_len: usize,
    pub lengths: Vec<usize>,
    pub mask: Vec<Vec<bool>>,
    pub labels: Vec<Vec<i64>>,
    pub tokens: Vec<Vec<Vec<usize>>>,
    pub utterance_ids: Vec<Vec<Option<String>>>,
}

impl PaddedBatch {
    pub fn rows(&self) -> usize {
        self.lengths.len()
    }

    pub fn real_positions(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }
}

/// Pads arbitrary utterance sequences (whole conversations or chunks).
pub fn pad_sequences(
    sequences: &[&[Utterance]],
    vocab: &Vocab,
    target_len: usize,
) -> Result<PaddedBatch> {
    if target_len == 0 {
        return Err(Error::Argument("target_len must be positive".into()));
    }
    if let Some(longest) = sequences.iter().map(|s| s.len()).max() {
        if longest > target_len {
            return Err(Error::Argument(format!(
                "target_len {target_len} is shorter than a sequence of length {longest}"
            )));
        }
    }
    let mut batch = PaddedBatch {
        target_len,
        lengths: Vec::with_capacity(sequences.len()),
        mask: Vec::with_capacity(sequences.len()),
        labels: Vec::with_capacity(sequences.len()),
        tokens: Vec::with_capacity(sequences.len()),
        utterance_ids: Vec::with_capacity(sequences.len()),
    };
    for seq in sequences {
        let pad = target_len - seq.len();
        batch.lengths.push(seq.len());
        batch.mask.push(
            std::iter::repeat_n(true, seq.len())
                .chain(std::iter::repeat_n(false, pad))
                .collect(),
        );
        batch.labels.push(
            seq.iter()
                .map(|u| u.da_label as i64)
                .chain(std::iter::repeat_n(IGNORE_INDEX, pad))
                .collect(),
        );
        batch.tokens.push(
            seq.iter()
                .map(|u| u.tokens.iter().map(|t| vocab.token_id(t)).collect())
                .chain(std::iter::repeat_n(vec![PAD], pad))
                .collect(),
        );
        batch.utterance_ids.push(
            seq.iter()
                .map(|u| Some(u.utterance_id.clone()))
                .chain(std::iter::repeat_n(None, pad))
                .collect(),
        );
    }
    Ok(batch)
}

pub fn pad_conversations(
    conversations: &[Conversation],
    vocab: &Vocab,
    target_len: usize,
) -> Result<PaddedBatch> {
    let seqs: Vec<&[Utterance]> = conversations.iter().map(|c| c.utterances.as_slice()).collect();
    pad_sequences(&seqs, vocab, target_len)
}
