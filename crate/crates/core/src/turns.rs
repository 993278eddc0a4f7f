//! Speaker-turn relabeling and the turn/topic embedding tables.
//!
//! Speakers are reduced to a binary label that flips whenever the speaker
//! changes, so any number of parties maps onto two shared embeddings.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// One bit per utterance, starting at 0 and flipping at each speaker change.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TurnLabelSequence(Vec<u8>);

impl TurnLabelSequence {
    pub fn labels(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flips(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn as_indices(&self) -> Vec<usize> {
        self.0.iter().map(|&b| b as usize).collect()
    }
}

pub fn relabel_turns<S: PartialEq>(speakers: &[S]) -> Result<TurnLabelSequence> {
    if speakers.is_empty() {
        return Err(Error::Argument("cannot relabel an empty speaker sequence".into()));
    }
    let mut labels = Vec::with_capacity(speakers.len());
    let mut current = 0u8;
    labels.push(current);
    for pair in speakers.windows(2) {
        if pair[0] != pair[1] {
            current ^= 1;
        }
        labels.push(current);
    }
    Ok(TurnLabelSequence(labels))
}

/// How turn embeddings are merged into utterance embeddings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// No turn embeddings.
    None,
    /// `e(u) + f(s)`.
    #[default]
    Sum,
    /// `W [e(u); f(s)] + b` projected back to `d`.
    Concat,
}

impl std::str::FromStr for CombineMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(CombineMode::None),
            "sum" => Ok(CombineMode::Sum),
            "concat" => Ok(CombineMode::Concat),
            other => Err(format!("unknown combine mode {other:?}")),
        }
    }
}

impl std::fmt::Display for CombineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CombineMode::None => "none",
            CombineMode::Sum => "sum",
            CombineMode::Concat => "concat",
        })
    }
}

/// The two conversation-invariant turn vectors, stored as a `[2, d]` table,
/// plus the projection used by [`CombineMode::Concat`].
#[derive(Debug, Clone, Copy)]
pub struct TurnEmbeddingTable {
    pub table: ParamId,
    pub proj: Option<(ParamId, ParamId)>,
}

impl TurnEmbeddingTable {
    /// Zero-initialised table; the concat projection starts at `[I | 0]`
    /// with zero bias, so either mode initially passes `e(u)` through.
    pub fn register<F: Real>(store: &mut ParamStore<F>, d: usize, mode: CombineMode) -> Result<Option<Self>> {
        if mode == CombineMode::None {
            return Ok(None);
        }
        let table = store.add("turns.table", Tensor::zeros(&[2, d]))?;
        let proj = if mode == CombineMode::Concat {
            let mut w = Tensor::zeros(&[d, 2 * d]);
            for i in 0..d {
                w.data_mut()[i * 2 * d + i] = F::one();
            }
            let w = store.add("turns.proj.weight", w)?;
            let b = store.add("turns.proj.bias", Tensor::zeros(&[d]))?;
            Some((w, b))
        } else {
            None
        };
        Ok(Some(TurnEmbeddingTable { table, proj }))
    }

    pub fn apply<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        embeddings: NodeId,
        turns: &[usize],
    ) -> Result<NodeId> {
        let table = g.param(store, self.table)?;
        match self.proj {
            None => combine_sum(g, embeddings, turns, table),
            Some((w, b)) => {
                let w = g.param(store, w)?;
                let b = g.param(store, b)?;
                combine_concat(g, embeddings, turns, table, w, b)
            }
        }
    }
}

fn check_turns(turns: &[usize], rows: usize) -> Result<()> {
    if turns.len() != rows {
        return Err(Error::shape(
            "turn embedding",
            format!("{rows} utterances but {} turn labels", turns.len()),
        ));
    }
    if turns.iter().any(|&t| t > 1) {
        return Err(Error::Argument("turn labels must be 0 or 1".into()));
    }
    Ok(())
}

/// `g(u, s) = e(u) + f(s)` for every row of `embeddings` (`[N, d]`).
pub fn combine_sum<F: Real>(
    g: &mut Graph<F>,
    embeddings: NodeId,
    turns: &[usize],
    table: NodeId,
) -> Result<NodeId> {
    check_turns(turns, g.value(embeddings).dims2().0)?;
    let f = g.gather(table, turns)?;
    g.add(embeddings, f)
}

/// `W [e(u); f(s)] + b` with `W: [d, 2d]`, `b: [d]`.
pub fn combine_concat<F: Real>(
    g: &mut Graph<F>,
    embeddings: NodeId,
    turns: &[usize],
    table: NodeId,
    weight: NodeId,
    bias: NodeId,
) -> Result<NodeId> {
    check_turns(turns, g.value(embeddings).dims2().0)?;
    let f = g.gather(table, turns)?;
    let joined = g.concat(&[embeddings, f], 1)?;
    let projected = g.matmul_t(joined, weight)?;
    g.add(projected, bias)
}

/// One trainable vector per topic, stored as a `[topics, d]` table.
#[derive(Debug, Clone, Copy)]
pub struct TopicEmbeddingTable {
    pub table: ParamId,
    pub num_topics: usize,
}

impl TopicEmbeddingTable {
    pub fn register<F: Real>(store: &mut ParamStore<F>, num_topics: usize, d: usize) -> Result<Option<Self>> {
        if num_topics == 0 {
            return Ok(None);
        }
        let table = store.add("topics.table", Tensor::zeros(&[num_topics, d]))?;
        Ok(Some(TopicEmbeddingTable { table, num_topics }))
    }

    /// Adds `h(m)` to every row whose topic is known; rows with `None` are
    /// left unchanged.
    pub fn apply<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        embeddings: NodeId,
        topics: &[Option<usize>],
    ) -> Result<NodeId> {
        let table = g.param(store, self.table)?;
        add_topic(g, embeddings, topics, table)
    }
}

/// `l(u, s, m) = g(u, s) + h(m)`, where `topics[i]` is the topic of row `i`
/// (the conversation topic broadcast to each of its utterances).
pub fn add_topic<F: Real>(
    g: &mut Graph<F>,
    embeddings: NodeId,
    topics: &[Option<usize>],
    table: NodeId,
) -> Result<NodeId> {
    let (rows, d) = g.value(embeddings).dims2();
    let num_topics = g.value(table).dims2().0;
    if topics.len() != rows {
        return Err(Error::shape(
            "add_topic",
            format!("{rows} utterances but {} topics", topics.len()),
        ));
    }
    if let Some(bad) = topics.iter().flatten().find(|&&m| m >= num_topics) {
        return Err(Error::Argument(format!(
            "topic index {bad} out of range for {num_topics} topics"
        )));
    }
    if topics.iter().all(Option::is_some) {
        let idx: Vec<usize> = topics.iter().map(|m| m.unwrap()).collect();
        let h = g.gather(table, &idx)?;
        return g.add(embeddings, h);
    }
    if topics.iter().all(Option::is_none) {
        return Ok(embeddings);
    }
    // Mixed batch: rows without a topic read an all-zero row appended to the table.
    let zero = g.constant(Tensor::zeros(&[1, d]))?;
    let extended = g.concat(&[table, zero], 0)?;
    let idx: Vec<usize> = topics.iter().map(|m| m.unwrap_or(num_topics)).collect();
    let h = g.gather(extended, &idx)?;
    g.add(embeddings, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(seq: &TurnLabelSequence) -> Vec<u8> {
        seq.labels().to_vec()
    }

    #[test]
    fn multi_party_example() {
        let out = relabel_turns(&[0, 0, 1, 2, 3, 3, 1]).unwrap();
        assert_eq!(bits(&out), [0, 0, 1, 0, 1, 1, 0]);
    }

    #[test]
    fn single_speaker_never_flips() {
        assert_eq!(bits(&relabel_turns(&["A", "A", "A"]).unwrap()), [0, 0, 0]);
    }

    #[test]
    fn flip_on_change_trace() {
        assert_eq!(bits(&relabel_turns(&[2, 7, 7, 2, 5]).unwrap()), [0, 1, 1, 0, 1]);
    }

    #[test]
    fn empty_is_argument_error() {
        let empty: [u32; 0] = [];
        assert!(matches!(relabel_turns(&empty), Err(Error::Argument(_))));
    }

    fn row(g: &mut Graph<f64>, v: &[f64]) -> NodeId {
        g.constant(Tensor::row(v.to_vec())).unwrap()
    }

    #[test]
    fn sum_with_zero_turn_vector_is_identity() {
        let mut g = Graph::new();
        let e = row(&mut g, &[0.3, -1.25, 7.0]);
        let table = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let out = combine_sum(&mut g, e, &[1], table).unwrap();
        assert_eq!(g.value(out).data(), &[0.3, -1.25, 7.0]);
    }

    #[test]
    fn sum_adds_selected_vector() {
        let mut g = Graph::new();
        let e = row(&mut g, &[1.0, 2.0]);
        let table = g
            .constant(Tensor::matrix(2, 2, vec![9.0, 9.0, 0.5, -0.5]).unwrap())
            .unwrap();
        let out = combine_sum(&mut g, e, &[1], table).unwrap();
        assert_eq!(g.value(out).data(), &[1.5, 1.5]);
    }

    #[test]
    fn sum_dimension_mismatch() {
        let mut g = Graph::new();
        let e = row(&mut g, &[1.0, 2.0]);
        let table = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(combine_sum(&mut g, e, &[0], table), Err(Error::Shape { .. })));
    }

    fn concat_with(w: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut g = Graph::new();
        let e = row(&mut g, &[1.0, -2.0]);
        let table = g
            .constant(Tensor::matrix(2, 2, vec![0.25, 0.5, 3.0, -4.0]).unwrap())
            .unwrap();
        let w = g.constant(Tensor::matrix(2, 4, w).unwrap()).unwrap();
        let b = g.constant(Tensor::zeros(&[2])).unwrap();
        let out = combine_concat(&mut g, e, &[1], table, w, b).unwrap();
        let sum = combine_sum(&mut g, e, &[1], table).unwrap();
        (g.value(out).data().to_vec(), g.value(sum).data().to_vec())
    }

    #[test]
    fn concat_identity_projection_recovers_embedding() {
        let (out, _) = concat_with(vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(out, [1.0, -2.0]);
    }

    #[test]
    fn concat_with_stacked_identities_equals_sum() {
        let (out, sum) = concat_with(vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(out, sum);
    }

    #[test]
    fn concat_shape_error() {
        let mut g = Graph::new();
        let e = row(&mut g, &[1.0, -2.0]);
        let table = g.constant(Tensor::zeros(&[2, 2])).unwrap();
        let w = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(
            combine_concat(&mut g, e, &[0], table, w, b),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn topic_addition() {
        let mut g = Graph::new();
        let e = row(&mut g, &[1.0, 1.0]);
        let table = g
            .constant(Tensor::matrix(2, 2, vec![0.0, 0.0, -1.0, 2.0]).unwrap())
            .unwrap();
        let zero = add_topic(&mut g, e, &[Some(0)], table).unwrap();
        assert_eq!(g.value(zero).data(), &[1.0, 1.0]);
        let out = add_topic(&mut g, e, &[Some(1)], table).unwrap();
        assert_eq!(g.value(out).data(), &[0.0, 3.0]);
        assert!(matches!(
            add_topic(&mut g, e, &[Some(2)], table),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn mixed_topic_rows() {
        let mut g = Graph::new();
        let e = g.constant(Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap()).unwrap();
        let table = g.constant(Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap()).unwrap();
        let out = add_topic(&mut g, e, &[None, Some(0)], table).unwrap();
        assert_eq!(g.value(out).data(), &[1.0, 1.0, 1.5, 1.5]);
    }

    #[test]
    fn concat_projection_starts_at_identity() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let t = TurnEmbeddingTable::register(&mut store, 3, CombineMode::Concat)
            .unwrap()
            .unwrap();
        let (w, _) = t.proj.unwrap();
        let w = store.get(w).value.data().to_vec();
        assert_eq!(&w[0..6], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&w[6..12], &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(TurnEmbeddingTable::register(&mut store, 3, CombineMode::None)
            .unwrap()
            .is_none());
    }
}
