//! Dialogue corpora: conversations, vocabularies, JSON-lines ingestion,
//! split statistics and padding.

mod jsonl;
mod padding;
mod stats;
mod vocab;

pub use jsonl::{load_corpus, save_corpus, CorpusFormat};
pub use padding::{pad_conversations, pad_sequences, PaddedBatch};
pub use stats::{corpus_stats, CorpusStats, SplitStats};
pub use vocab::{Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker: String,
    pub text: String,
    /// Lowercased whitespace tokens of `text`; `[UNK_TOKEN]` when empty.
    pub tokens: Vec<String>,
    pub da_label: usize,
}

impl Utterance {
    pub fn new(
        utterance_id: impl Into<String>,
        speaker: impl Into<String>,
        text: impl Into<String>,
        da_label: usize,
    ) -> Self {
        let text = text.into();
        Utterance {
            utterance_id: utterance_id.into(),
            speaker: speaker.into(),
            tokens: tokenize(&text),
            text,
            da_label,
        }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if tokens.is_empty() {
        vec![UNK_TOKEN.to_string()]
    } else {
        tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub utterances: Vec<Utterance>,
    pub topic: Option<usize>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn speakers(&self) -> Vec<&str> {
        self.utterances.iter().map(|u| u.speaker.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.utterances.iter().map(|u| u.da_label).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub train: Vec<Conversation>,
    pub val: Vec<Conversation>,
    pub test: Vec<Conversation>,
    pub label_vocab: Vocab,
    pub topic_vocab: Option<Vocab>,
    pub token_vocab: Vocab,
}

impl Corpus {
    /// Builds the token vocabulary from `train` and assembles the corpus.
    pub fn new(
        train: Vec<Conversation>,
        val: Vec<Conversation>,
        test: Vec<Conversation>,
        label_vocab: Vocab,
        topic_vocab: Option<Vocab>,
    ) -> Self {
        let token_vocab = Vocab::tokens_from(&train);
        Corpus {
            train,
            val,
            test,
            label_vocab,
            topic_vocab,
            token_vocab,
        }
    }

    pub fn split(&self, split: Split) -> &[Conversation] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.label_vocab.len()
    }

    pub fn num_topics(&self) -> usize {
        self.topic_vocab.as_ref().map_or(0, Vocab::len)
    }

    pub fn has_topics(&self) -> bool {
        self.num_topics() > 0
    }
}
