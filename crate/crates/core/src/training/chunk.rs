use crate::corpus::{Conversation, Utterance};
use crate::error::{Error, Result};
use crate::turns::relabel_turns;

/// A contiguous slice of a conversation used as one training example.
/// Turn labels are computed on the whole conversation before slicing.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk<'a> {
    pub conversation: &'a Conversation,
    pub start: usize,
    pub turns: Vec<usize>,
}

impl<'a> Chunk<'a> {
    /// The whole conversation as a single chunk.
    pub fn whole(conversation: &'a Conversation) -> Result<Self> {
        let turns = relabel_turns(&conversation.speakers())?.as_indices();
        Ok(Chunk {
            conversation,
            start: 0,
            turns,
        })
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn utterances(&self) -> &'a [Utterance] {
        &self.conversation.utterances[self.start..self.start + self.len()]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.utterances().iter().map(|u| u.da_label).collect()
    }

    pub fn topic(&self) -> Option<usize> {
        self.conversation.topic
    }

    pub fn conversation_id(&self) -> &str {
        &self.conversation.conversation_id
    }
}

/// Cuts `conversation` into `ceil(T / chunk_size)` consecutive chunks, all of
/// length `chunk_size` except possibly the last.
pub fn slice_chunks(conversation: &Conversation, chunk_size: usize) -> Result<Vec<Chunk<'_>>> {
    if chunk_size == 0 {
        return Err(Error::Argument("chunk_size must be positive".into()));
    }
    let whole = Chunk::whole(conversation)?;
    Ok(whole
        .turns
        .chunks(chunk_size)
        .enumerate()
        .map(|(i, turns)| Chunk {
            conversation,
            start: i * chunk_size,
            turns: turns.to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(speakers: &[&str]) -> Conversation {
        Conversation {
            conversation_id: "c".into(),
            utterances: speakers
                .iter()
                .enumerate()
                .map(|(i, s)| Utterance::new(format!("u{i}"), *s, "x", i % 3))
                .collect(),
            topic: Some(2),
        }
    }

    fn lengths(c: &Conversation, size: usize) -> Vec<usize> {
        slice_chunks(c, size).unwrap().iter().map(Chunk::len).collect()
    }

    #[test]
    fn ten_into_chunks_of_four() {
        let c = conv(&["a"; 10]);
        assert_eq!(lengths(&c, 4), [4, 4, 2]);
    }

    #[test]
    fn exact_fit_is_identity() {
        let c = conv(&["a", "b", "a", "a"]);
        let chunks = slice_chunks(&c, 4).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0], Chunk::whole(&c).unwrap());
    }

    #[test]
    fn long_conversation() {
        let c = conv(&["a"; 389]);
        assert_eq!(lengths(&c, 128), [128, 128, 128, 5]);
    }

    #[test]
    fn boundary_does_not_reset_turns() {
        let c = conv(&["a", "b", "b", "c", "c"]);
        let chunks = slice_chunks(&c, 2).unwrap();
        assert_eq!(chunks[1].turns, vec![1, 0]);
        assert_eq!(chunks[1].utterances()[0].utterance_id, "u2");
        assert_eq!(chunks[2].topic(), Some(2));
    }

    #[test]
    fn zero_chunk_size_rejected() {
        assert!(slice_chunks(&conv(&["a"]), 0).is_err());
    }
}
