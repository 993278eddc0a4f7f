//! Bidirectional GRU context encoder, the per-utterance classifier, and the
//! full model that ties encoder, turn/topic embeddings and context together.

mod gru;

pub use gru::{bigru_forward, gru_cell, BiGruParams, GruCellParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Real, Tensor};
use crate::encoder::{BagEncoder, BatchInputs, EncoderBackend};
use crate::error::{Error, Result};
use crate::turns::{CombineMode, TopicEmbeddingTable, TurnEmbeddingTable};

/// Linear layer `W q + b` with `W: [K, 2h]`, `b: [K]`.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub num_classes: usize,
    pub input_dim: usize,
}

impl ClassifierParams {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParamStore<F>,
        input_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let mut w = Tensor::zeros(&[num_classes, input_dim]);
        for v in w.data_mut() {
            *v = F::from_f64_lossy(rng.gen_range(-bound..bound));
        }
        let weight = store.add("classifier.weight", w)?;
        let bias = store.add("classifier.bias", Tensor::zeros(&[num_classes]))?;
        Ok(ClassifierParams {
            weight,
            bias,
            num_classes,
            input_dim,
        })
    }
}

/// Logits for every row of `q` (`[N, 2h]` → `[N, K]`).
pub fn classify<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &ClassifierParams,
    q: NodeId,
) -> Result<NodeId> {
    if g.value(q).dims2().1 != params.input_dim {
        return Err(Error::shape(
            "classify",
            format!("input {:?}, expected width {}", g.value(q).shape(), params.input_dim),
        ));
    }
    let w = g.param(store, params.weight)?;
    let b = g.param(store, params.bias)?;
    let logits = g.matmul_t(q, w)?;
    g.add(logits, b)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-wise [`argmax`] of a `[N, K]` tensor.
pub fn predictions<F: Real>(logits: &Tensor<F>) -> Vec<usize> {
    let (n, _) = logits.dims2();
    (0..n).map(|i| argmax(logits.row_slice(i))).collect()
}

/// Architecture hyper-parameters; together with the seed they determine
/// the initial parameters exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub h: usize,
    pub num_classes: usize,
    pub vocab_size: usize,
    pub num_topics: usize,
    pub combine_mode: CombineMode,
    pub use_topic: bool,
    pub encoder: EncoderBackend,
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.h == 0 || self.num_classes == 0 {
            return Err(Error::Argument(format!(
                "d, h and num_classes must be positive (d={}, h={}, K={})",
                self.d, self.h, self.num_classes
            )));
        }
        if self.encoder == EncoderBackend::Bag && self.vocab_size < 2 {
            return Err(Error::Argument("bag encoder needs a token vocabulary".into()));
        }
        Ok(())
    }

    pub fn topics_active(&self) -> bool {
        self.use_topic && self.num_topics > 0
    }
}

/// One padded batch in time-major slot order: slot `t * rows + b` is
/// position `t` of sequence `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub rows: usize,
    pub len: usize,
    pub inputs: BatchInputs,
    pub turns: Vec<usize>,
    pub topics: Vec<Option<usize>>,
    pub labels: Vec<i64>,
    pub mask: Vec<bool>,
}

impl SequenceBatch {
    pub fn slots(&self) -> usize {
        self.rows * self.len
    }

    fn validate(&self) -> Result<()> {
        let n = self.slots();
        let input_slots = match &self.inputs {
            BatchInputs::Tokens(t) => t.len(),
            BatchInputs::Vectors { dim, data } => data.len() / (*dim).max(1),
        };
        if [input_slots, self.turns.len(), self.topics.len(), self.labels.len(), self.mask.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::shape("sequence batch", format!("inconsistent slot counts for {n} slots")));
        }
        Ok(())
    }
}

/// All trainable state of the dialogue act tagger.
#[derive(Debug, Clone)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub store: ParamStore<F>,
    pub bag: Option<BagEncoder>,
    pub turns: Option<TurnEmbeddingTable>,
    pub topics: Option<TopicEmbeddingTable>,
    pub gru: BiGruParams,
    pub classifier: ClassifierParams,
}

impl<F: Real> Model<F> {
    /// Random parameters are drawn in a fixed order (word embeddings, GRU,
    /// classifier) before the zero-initialised turn and topic tables, so
    /// models that differ only in turn/topic settings share every other
    /// initial value.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let bag = match config.encoder {
            EncoderBackend::Bag => Some(BagEncoder::register(&mut store, config.vocab_size, config.d, &mut rng)?),
            EncoderBackend::Precomputed => None,
        };
        let gru = BiGruParams::register(&mut store, config.d, config.h, &mut rng)?;
        let classifier = ClassifierParams::register(&mut store, gru.output_dim(), config.num_classes, &mut rng)?;
        let turns = TurnEmbeddingTable::register(&mut store, config.d, config.combine_mode)?;
        let topics = if config.use_topic {
            TopicEmbeddingTable::register(&mut store, config.num_topics, config.d)?
        } else {
            None
        };
        Ok(Model {
            config,
            store,
            bag,
            turns,
            topics,
            gru,
            classifier,
        })
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            bag: self.bag,
            turns: self.turns,
            topics: self.topics,
            gru: self.gru,
            classifier: self.classifier,
        }
    }

    /// Utterance embeddings after turn and topic embeddings: `[slots, d]`.
    pub fn utterance_embeddings(&self, g: &mut Graph<F>, batch: &SequenceBatch) -> Result<NodeId> {
        self.utterance_embeddings_with(g, &self.store, batch)
    }

    fn utterance_embeddings_with(&self, g: &mut Graph<F>, store: &ParamStore<F>, batch: &SequenceBatch) -> Result<NodeId> {
        batch.validate()?;
        let e = match (&batch.inputs, &self.bag) {
            (BatchInputs::Tokens(lists), Some(bag)) => bag.encode(g, store, lists)?,
            (BatchInputs::Vectors { dim, data }, None) => {
                if *dim != self.config.d {
                    return Err(Error::shape(
                        "model_forward",
                        format!("embedding dim {dim} but model d={}", self.config.d),
                    ));
                }
                let values = data.iter().map(|&v| F::from_f32(v).unwrap()).collect();
                g.constant(Tensor::matrix(batch.slots(), *dim, values)?)?
            }
            (BatchInputs::Tokens(_), None) => {
                return Err(Error::Argument("token inputs given to a precomputed-embedding model".into()))
            }
            (BatchInputs::Vectors { .. }, Some(_)) => {
                return Err(Error::Argument("vector inputs given to a bag-encoder model".into()))
            }
        };
        let e = match &self.turns {
            Some(turns) => turns.apply(g, store, e, &batch.turns)?,
            None => e,
        };
        match &self.topics {
            Some(topics) if self.config.use_topic => topics.apply(g, store, e, &batch.topics),
            _ => Ok(e),
        }
    }

    /// Logits `[slots, K]` in the batch's slot order.
    pub fn forward(&self, g: &mut Graph<F>, batch: &SequenceBatch) -> Result<NodeId> {
        self.forward_with(g, &self.store, batch)
    }

    /// Like [`Model::forward`] but reading parameter values from `store`
    /// (which must have this model's layout).
    pub fn forward_with(&self, g: &mut Graph<F>, store: &ParamStore<F>, batch: &SequenceBatch) -> Result<NodeId> {
        let x = self.utterance_embeddings_with(g, store, batch)?;
        let q = bigru_forward(g, store, &self.gru, x, batch.rows, &batch.mask)?;
        classify(g, store, &self.classifier, q)
    }

    /// Returns `(loss, logits)`.
    pub fn loss(&self, g: &mut Graph<F>, batch: &SequenceBatch) -> Result<(NodeId, NodeId)> {
        let logits = self.forward(g, batch)?;
        let loss = g.softmax_cross_entropy(logits, &batch.labels)?;
        Ok((loss, logits))
    }

    pub fn loss_with(&self, g: &mut Graph<F>, store: &ParamStore<F>, batch: &SequenceBatch) -> Result<NodeId> {
        let logits = self.forward_with(g, store, batch)?;
        g.softmax_cross_entropy(logits, &batch.labels)
    }

    /// Forward pass without gradient bookkeeping, returning the logits.
    pub fn logits(&self, batch: &SequenceBatch) -> Result<Tensor<F>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, batch)?;
        Ok(g.value(out).clone())
    }

    pub fn num_parameters(&self) -> usize {
        self.store.iter().map(|p| p.value.numel()).sum()
    }
}
