#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use turnwise::autodiff::{ParamStore, Real};
use turnwise::context::{Model, ModelConfig, SequenceBatch};
use turnwise::corpus::{Conversation, Corpus, Utterance, Vocab};
use turnwise::encoder::{EncoderBackend, UtteranceEncoder};
use turnwise::training::{assemble_batch, Chunk};
use turnwise::turns::CombineMode;

/// One conversation of `len` utterances over a small vocabulary, with a
/// topic and a few speaker changes.
pub fn toy_corpus(len: usize, num_classes: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speakers = ["ann", "bob", "cy"];
    let words = ["yes", "no", "maybe", "okay", "well", "right"];
    let utterances = (0..len)
        .map(|t| {
            let n = rng.gen_range(1..=3);
            let text: Vec<&str> = (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect();
            Utterance::new(
                format!("c0-u{t}"),
                speakers[rng.gen_range(0..speakers.len())],
                text.join(" "),
                rng.gen_range(0..num_classes),
            )
        })
        .collect();
    let conv = Conversation {
        conversation_id: "c0".into(),
        utterances,
        topic: Some(1),
    };
    Corpus::new(
        vec![conv],
        vec![],
        vec![],
        Vocab::from_items((0..num_classes).map(|k| format!("l{k}"))),
        Some(Vocab::from_items(["t0", "t1", "t2"])),
    )
}

pub fn model_config(corpus: &Corpus, d: usize, h: usize, mode: CombineMode, use_topic: bool) -> ModelConfig {
    ModelConfig {
        d,
        h,
        num_classes: corpus.num_classes(),
        vocab_size: corpus.token_vocab.len(),
        num_topics: corpus.num_topics(),
        combine_mode: mode,
        use_topic,
        encoder: EncoderBackend::Bag,
    }
}

pub fn whole_batch(corpus: &Corpus, convs: &[Conversation]) -> SequenceBatch {
    let chunks: Vec<Chunk<'_>> = convs.iter().map(|c| Chunk::whole(c).unwrap()).collect();
    assemble_batch(&chunks, &corpus.token_vocab, &UtteranceEncoder::Bag).unwrap()
}

/// Overwrites every trainable coordinate (except frozen rows) with
/// uniform(-scale, scale) values, so zero-initialised tables are exercised.
pub fn randomize<F: Real>(store: &mut ParamStore<F>, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in store.iter_mut() {
        let cols = p.value.dims2().1;
        let frozen = p.frozen_rows.clone();
        for (i, v) in p.value.data_mut().iter_mut().enumerate() {
            let x = rng.gen_range(-scale..scale);
            if !frozen.contains(&(i / cols)) {
                *v = F::from_f64_lossy(x);
            }
        }
    }
}

pub fn fresh_model(corpus: &Corpus, d: usize, h: usize, mode: CombineMode, use_topic: bool, seed: u64) -> Model<f64> {
    Model::new(model_config(corpus, d, h, mode, use_topic), seed).unwrap()
}

// ---------------------------------------------------------------------------
// Straight-loop reference GRU, independent of the tape.
// ---------------------------------------------------------------------------

pub struct RefCell {
    pub w: [Vec<Vec<f64>>; 3],
    pub u: [Vec<Vec<f64>>; 3],
    pub b: [Vec<f64>; 3],
}

fn matrix(store: &ParamStore<f64>, name: &str) -> Vec<Vec<f64>> {
    let p = store.by_name(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let (r, _) = p.value.dims2();
    (0..r).map(|i| p.value.row_slice(i).to_vec()).collect()
}

fn vector(store: &ParamStore<f64>, name: &str) -> Vec<f64> {
    store.by_name(name).unwrap().value.data().to_vec()
}

impl RefCell {
    pub fn from_store(store: &ParamStore<f64>, prefix: &str) -> Self {
        let m = |n: &str| matrix(store, &format!("{prefix}.{n}"));
        let v = |n: &str| vector(store, &format!("{prefix}.{n}"));
        RefCell {
            w: [m("W_z"), m("W_r"), m("W_h")],
            u: [m("U_z"), m("U_r"), m("U_h")],
            b: [v("b_z"), v("b_r"), v("b_h")],
        }
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let lin = |k: usize, hh: &[f64], i: usize| -> f64 {
            let mut s = self.b[k][i];
            for (j, xv) in x.iter().enumerate() {
                s += self.w[k][i][j] * xv;
            }
            for (j, hv) in hh.iter().enumerate() {
                s += self.u[k][i][j] * hv;
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z: Vec<f64> = (0..n).map(|i| sig(lin(0, h, i))).collect();
        let r: Vec<f64> = (0..n).map(|i| sig(lin(1, h, i))).collect();
        let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
        let cand: Vec<f64> = (0..n).map(|i| lin(2, &rh, i).tanh()).collect();
        (0..n).map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i]).collect()
    }
}

/// Bi-GRU over a single unpadded sequence; returns `[h_fwd ; h_bwd]` per step.
pub fn reference_bigru(store: &ParamStore<f64>, xs: &[Vec<f64>], hidden: usize) -> Vec<Vec<f64>> {
    let fwd = RefCell::from_store(store, "gru.fwd");
    let bwd = RefCell::from_store(store, "gru.bwd");
    let len = xs.len();
    let mut hf = vec![vec![0.0; hidden]; len];
    let mut h = vec![0.0; hidden];
    for t in 0..len {
        h = fwd.step(&xs[t], &h);
        hf[t] = h.clone();
    }
    let mut hb = vec![vec![0.0; hidden]; len];
    let mut h = vec![0.0; hidden];
    for t in (0..len).rev() {
        h = bwd.step(&xs[t], &h);
        hb[t] = h.clone();
    }
    (0..len).map(|t| [hf[t].clone(), hb[t].clone()].concat()).collect()
}
