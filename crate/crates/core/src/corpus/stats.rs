use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{Conversation, Corpus, Split};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub conversations: usize,
    pub utterances: usize,
    pub max_len: usize,
    /// Maximum number of distinct speakers in any one conversation.
    pub num_parties: usize,
}

impl SplitStats {
    pub fn of(conversations: &[Conversation]) -> Self {
        SplitStats {
            conversations: conversations.len(),
            utterances: conversations.iter().map(Conversation::len).sum(),
            max_len: conversations.iter().map(Conversation::len).max().unwrap_or(0),
            num_parties: conversations
                .iter()
                .map(|c| c.speakers().into_iter().collect::<HashSet<_>>().len())
                .max()
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub num_classes: usize,
    pub num_parties: usize,
    pub train: SplitStats,
    pub val: SplitStats,
    pub test: SplitStats,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let [train, val, test] = Split::ALL.map(|s| SplitStats::of(corpus.split(s)));
    CorpusStats {
        num_classes: corpus.num_classes(),
        num_parties: train.num_parties.max(val.num_parties).max(test.num_parties),
        train,
        val,
        test,
    }
}

fn compact(n: usize) -> String {
    if n >= 10_000 {
        format!("{}K", (n + 500) / 1000)
    } else {
        n.to_string()
    }
}

impl fmt::Display for CorpusStats {
    /// One-row summary in the usual dataset-table layout:
    /// `|C|  parties  train  val  test` with conversations/utterances.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |s: &SplitStats| format!("{}/{}", s.conversations, compact(s.utterances));
        writeln!(
            f,
            "{:>5} {:>8} {:>14} {:>14} {:>14}",
            "|C|", "parties", "train", "val", "test"
        )?;
        writeln!(
            f,
            "{:>5} {:>8} {:>14} {:>14} {:>14}",
            self.num_classes,
            self.num_parties,
            cell(&self.train),
            cell(&self.val),
            cell(&self.test)
        )?;
        write!(
            f,
            "max conversation length: train {} / val {} / test {}",
            self.train.max_len, self.val.max_len, self.test.max_len
        )
    }
}
