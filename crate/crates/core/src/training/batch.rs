use crate::context::SequenceBatch;
use crate::corpus::{pad_sequences, Utterance, Vocab};
use crate::encoder::UtteranceEncoder;
use crate::error::{Error, Result};

use super::Chunk;

/// Pads `chunks` to the longest one and lays them out time-major.
pub fn assemble_batch(
    chunks: &[Chunk<'_>],
    vocab: &Vocab,
    encoder: &UtteranceEncoder,
) -> Result<SequenceBatch> {
    let len = chunks
        .iter()
        .map(Chunk::len)
        .max()
        .ok_or_else(|| Error::Argument("empty batch".into()))?;
    let rows = chunks.len();
    let seqs: Vec<&[Utterance]> = chunks.iter().map(Chunk::utterances).collect();
    let padded = pad_sequences(&seqs, vocab, len)?;
    let inputs = encoder.inputs(&padded)?;

    let slots = rows * len;
    let mut turns = Vec::with_capacity(slots);
    let mut topics = Vec::with_capacity(slots);
    let mut labels = Vec::with_capacity(slots);
    let mut mask = Vec::with_capacity(slots);
    for t in 0..len {
        for (b, chunk) in chunks.iter().enumerate() {
            turns.push(chunk.turns.get(t).copied().unwrap_or(0));
            topics.push(chunk.topic());
            labels.push(padded.labels[b][t]);
            mask.push(padded.mask[b][t]);
        }
    }
    Ok(SequenceBatch {
        rows,
        len,
        inputs,
        turns,
        topics,
        labels,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Conversation;
    use crate::encoder::BatchInputs;

    fn conv(id: &str, speakers: &[&str]) -> Conversation {
        Conversation {
            conversation_id: id.into(),
            utterances: speakers
                .iter()
                .enumerate()
                .map(|(i, s)| Utterance::new(format!("{id}{i}"), *s, format!("w{i}"), i))
                .collect(),
            topic: None,
        }
    }

    #[test]
    fn time_major_layout() {
        let a = conv("a", &["x", "y", "y"]);
        let b = conv("b", &["x"]);
        let vocab = Vocab::tokens_from(&[a.clone(), b.clone()]);
        let chunks = [Chunk::whole(&a).unwrap(), Chunk::whole(&b).unwrap()];
        let batch = assemble_batch(&chunks, &vocab, &UtteranceEncoder::Bag).unwrap();
        assert_eq!((batch.rows, batch.len), (2, 3));
        assert_eq!(batch.mask, [true, true, true, false, true, false]);
        assert_eq!(batch.labels, [0, 0, 1, -1, 2, -1]);
        assert_eq!(batch.turns, [0, 0, 1, 0, 1, 0]);
        match &batch.inputs {
            BatchInputs::Tokens(lists) => {
                assert_eq!(lists[0], vec![vocab.get("w0").unwrap()]);
                assert!(lists[3].is_empty());
            }
            other => panic!("{other:?}"),
        }
    }
}
