//! Utterance encoders: precomputed sentence vectors read from disk, or a
//! trainable mean-of-word-embeddings encoder.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Real, Tensor};
use crate::corpus::{PaddedBatch, Utterance, PAD};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"UEMB1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderBackend {
    Precomputed,
    #[default]
    Bag,
}

impl std::str::FromStr for EncoderBackend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "precomputed" => Ok(EncoderBackend::Precomputed),
            "bag" => Ok(EncoderBackend::Bag),
            other => Err(format!("unknown encoder backend {other:?}")),
        }
    }
}

/// Fixed utterance vectors keyed by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingFile {
    pub fn new(dim: usize) -> Self {
        EmbeddingFile {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::shape(
                "embedding file",
                format!("{id:?} has {} values, expected {}", vector.len(), self.dim),
            ));
        }
        if id.contains(['\t', '\n']) {
            return Err(Error::Argument(format!("utterance id {id:?} contains a tab or newline")));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&[f32]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    /// Reads either format, chosen by the leading magic bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::read_binary(&bytes[..])
        } else {
            Self::read_text(&bytes[..])
        }
        .map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Text format: `dim=<d>` then `<id>\t<d space-separated floats>` per line.
    pub fn read_text<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::Format(e.to_string()))?
            .ok_or_else(|| Error::Format("empty embedding file".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Format(format!("bad header {header:?}")))?;
        let mut file = EmbeddingFile::new(dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 2;
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("line {line_no}: missing tab")))?;
            let vector = values
                .split_whitespace()
                .map(str::parse::<f32>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {line_no}: {e}")))?;
            file.insert(id, vector)
                .map_err(|e| Error::Format(format!("line {line_no}: {e}")))?;
        }
        Ok(file)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dim={}", self.dim)?;
        for (id, v) in &self.vectors {
            write!(w, "{id}\t")?;
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Binary format: `UEMB1`, u32 dim, then records of u32 id length, id
    /// bytes and `dim` little-endian f32 values, until end of file.
    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self> {
        let mut buf = Vec::new();
        reader
            .read_to_end(&mut buf)
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut cur = ByteCursor::new(&buf);
        if cur.take(BINARY_MAGIC.len())? != BINARY_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let dim = cur.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let mut file = EmbeddingFile::new(dim);
        while !cur.is_empty() {
            let len = cur.u32()? as usize;
            let id = std::str::from_utf8(cur.take(len)?)
                .map_err(|e| Error::Format(e.to_string()))?
                .to_string();
            let vector = (0..dim).map(|_| cur.f32()).collect::<Result<Vec<_>>>()?;
            file.insert(id, vector)?;
        }
        Ok(file)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for (id, v) in &self.vectors {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Checks that every utterance in `utterances` has a vector.
    pub fn check_coverage<'a>(&self, utterances: impl IntoIterator<Item = &'a Utterance>) -> Result<()> {
        for u in utterances {
            self.get(&u.utterance_id)?;
        }
        Ok(())
    }
}

pub(crate) struct ByteCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteCursor { buf, pos: 0 }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// The stored vector for `u`.
pub fn encode_precomputed<'a>(u: &Utterance, file: &'a EmbeddingFile) -> Result<&'a [f32]> {
    file.get(&u.utterance_id)
}

/// Word embedding table of the bag encoder. Row [`PAD`] is frozen at zero.
#[derive(Debug, Clone, Copy)]
pub struct BagEncoder {
    pub word_emb: ParamId,
    pub dim: usize,
}

impl BagEncoder {
    /// Rows drawn from `uniform(-1/√d, 1/√d)`.
    pub fn register<F: Real, R: Rng>(
        store: &mut ParamStore<F>,
        vocab_size: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::Argument("token vocabulary must include PAD".into()));
        }
        let bound = 1.0 / (dim as f64).sqrt();
        let mut table = Tensor::zeros(&[vocab_size, dim]);
        for (i, v) in table.data_mut().iter_mut().enumerate() {
            let x = rng.gen_range(-bound..bound);
            if i / dim != PAD {
                *v = F::from_f64_lossy(x);
            }
        }
        let word_emb = store.add("encoder.word_emb", table)?;
        store.freeze_row(word_emb, PAD);
        Ok(BagEncoder { word_emb, dim })
    }

    /// Mean of token rows for each entry of `token_lists`; an empty list
    /// yields a zero row. Returns `[token_lists.len(), d]`.
    pub fn encode<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        token_lists: &[Vec<usize>],
    ) -> Result<NodeId> {
        let table = g.param(store, self.word_emb)?;
        let all: Vec<usize> = token_lists.iter().flatten().copied().collect();
        if all.is_empty() {
            return g.constant(Tensor::zeros(&[token_lists.len(), self.dim]));
        }
        let rows = g.gather(table, &all)?;
        let mut pool = vec![F::zero(); token_lists.len() * all.len()];
        let mut offset = 0;
        for (i, list) in token_lists.iter().enumerate() {
            if !list.is_empty() {
                let w = F::one() / F::from_usize(list.len()).unwrap();
                for j in offset..offset + list.len() {
                    pool[i * all.len() + j] = w;
                }
            }
            offset += list.len();
        }
        let pool = g.constant(Tensor::matrix(token_lists.len(), all.len(), pool)?)?;
        g.matmul(pool, rows)
    }
}

/// Per-position model inputs for a batch, in the batch's slot order.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchInputs {
    /// Token ids per slot (empty for padding).
    Tokens(Vec<Vec<usize>>),
    /// Row-major `[slots, dim]` vectors (zero rows for padding).
    Vectors { dim: usize, data: Vec<f32> },
}

/// Turns padded utterances into [`BatchInputs`] for one backend.
#[derive(Debug, Clone)]
pub enum UtteranceEncoder {
    Bag,
    Precomputed(Arc<EmbeddingFile>),
}

impl UtteranceEncoder {
    pub fn backend(&self) -> EncoderBackend {
        match self {
            UtteranceEncoder::Bag => EncoderBackend::Bag,
            UtteranceEncoder::Precomputed(_) => EncoderBackend::Precomputed,
        }
    }

    /// Inputs in time-major slot order (`t * rows + b`).
    pub fn inputs(&self, padded: &PaddedBatch) -> Result<BatchInputs> {
        let rows = padded.rows();
        let len = padded.target_len;
        match self {
            UtteranceEncoder::Bag => {
                let mut lists = Vec::with_capacity(rows * len);
                for t in 0..len {
                    for b in 0..rows {
                        if padded.mask[b][t] {
                            lists.push(padded.tokens[b][t].clone());
                        } else {
                            lists.push(Vec::new());
                        }
                    }
                }
                Ok(BatchInputs::Tokens(lists))
            }
            UtteranceEncoder::Precomputed(file) => {
                let dim = file.dim();
                let mut data = vec![0.0f32; rows * len * dim];
                for t in 0..len {
                    for b in 0..rows {
                        if let Some(id) = &padded.utterance_ids[b][t] {
                            let slot = t * rows + b;
                            data[slot * dim..(slot + 1) * dim].copy_from_slice(file.get(id)?);
                        }
                    }
                }
                Ok(BatchInputs::Vectors { dim, data })
            }
        }
    }
}
