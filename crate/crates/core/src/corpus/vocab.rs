use std::collections::{BTreeSet, HashMap};

use super::Conversation;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Bidirectional string ↔ index map.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

impl Eq for Vocab {}

impl Vocab {
    pub fn from_items<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab::default();
        for item in items {
            vocab.insert(item.into());
        }
        vocab
    }

    /// Sorted, deduplicated vocabulary.
    pub fn sorted<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = items.into_iter().map(Into::into).collect();
        Self::from_items(set)
    }

    /// Token vocabulary: `<pad>`, `<unk>`, then the sorted tokens of `train`.
    pub fn tokens_from(train: &[Conversation]) -> Self {
        let tokens: BTreeSet<&str> = train
            .iter()
            .flat_map(|c| &c.utterances)
            .flat_map(|u| u.tokens.iter().map(String::as_str))
            .filter(|t| *t != PAD_TOKEN && *t != UNK_TOKEN)
            .collect();
        Self::from_items([PAD_TOKEN, UNK_TOKEN].into_iter().chain(tokens))
    }

    fn insert(&mut self, item: String) -> usize {
        if let Some(&i) = self.index.get(&item) {
            return i;
        }
        let i = self.items.len();
        self.index.insert(item.clone(), i);
        self.items.push(item);
        i
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.items.get(index).map(String::as_str)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// Token index with unknown tokens mapped to [`UNK`].
    pub fn token_id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }
}
