use serde::{Deserialize, Serialize};

use crate::context::{Model, ModelConfig};
use crate::corpus::Vocab;
use crate::encoder::ByteCursor;
use crate::error::{Error, Result};

use super::{TrainConfig, TrainedModel};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"TURNW1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    labels: Vec<String>,
    topics: Option<Vec<String>>,
    tokens: Vec<String>,
}

/// Canonical JSON: object keys sorted, no insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default Map is a BTreeMap, so going through Value sorts keys.
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

/// Layout: magic, u32 version, u32 header length, canonical JSON header,
/// u32 parameter count, then per parameter: u32 name length, name, u32 rank,
/// u32 dims, little-endian f32 values. All integers little-endian.
pub fn save_checkpoint(trained: &TrainedModel) -> Result<Vec<u8>> {
    let header = Header {
        model: trained.model.config.clone(),
        train: trained.config.clone(),
        labels: trained.label_vocab.items().to_vec(),
        topics: trained.topic_vocab.as_ref().map(|v| v.items().to_vec()),
        tokens: trained.token_vocab.items().to_vec(),
    };
    let json = canonical_json(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    let store = &trained.model.store;
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for p in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let shape = p.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &s in shape {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    let mut cur = ByteCursor::new(bytes);
    if cur.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let len = cur.u32()? as usize;
    let header: Header = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;

    let mut model = Model::<f32>::new(header.model, header.train.seed)
        .map_err(|e| Error::Format(format!("bad model config: {e}")))?;
    let count = cur.u32()? as usize;
    if count != model.store.len() {
        return Err(Error::Format(format!(
            "{count} parameters stored, model has {}",
            model.store.len()
        )));
    }
    for id in model.store.ids().collect::<Vec<_>>() {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|e| Error::Format(e.to_string()))?
            .to_string();
        let rank = cur.u32()? as usize;
        let shape = (0..rank)
            .map(|_| cur.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let param = model.store.get_mut(id);
        if name != param.name || shape != param.value.shape() {
            return Err(Error::Format(format!(
                "parameter {name} {shape:?} does not match expected {} {:?}",
                param.name,
                param.value.shape()
            )));
        }
        for v in param.value.data_mut() {
            *v = cur.f32()?;
        }
    }
    if !cur.is_empty() {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    Ok(TrainedModel {
        model,
        config: header.train,
        label_vocab: Vocab::from_items(header.labels),
        topic_vocab: header.topics.map(Vocab::from_items),
        token_vocab: Vocab::from_items(header.tokens),
    })
}
