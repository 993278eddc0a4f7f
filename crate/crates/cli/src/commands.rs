use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::Serialize;

use turnwise::corpus::{corpus_stats, load_corpus, save_corpus, Conversation, Corpus, CorpusFormat};
use turnwise::encoder::{EmbeddingFile, EncoderBackend, UtteranceEncoder};
use turnwise::evaluation::{chunk_size_sweep, evaluate, generate_synthetic, run_ablation};
use turnwise::training::{
    canonical_json, load_checkpoint, save_checkpoint, slice_chunks, train, write_history_csv, TrainedModel,
};
use turnwise::turns::relabel_turns;

use crate::config::RunConfig;

fn corpus(config: &RunConfig) -> anyhow::Result<Corpus> {
    let dir = config.data.as_deref().expect("validated");
    load_corpus(dir, CorpusFormat::Jsonl).with_context(|| format!("loading corpus from {}", dir.display()))
}

fn encoder(config: &RunConfig, backend: EncoderBackend) -> anyhow::Result<UtteranceEncoder> {
    Ok(match backend {
        EncoderBackend::Bag => UtteranceEncoder::Bag,
        EncoderBackend::Precomputed => {
            let path = config.embedding_path()?;
            let file = EmbeddingFile::load(path).with_context(|| format!("loading embeddings {}", path.display()))?;
            UtteranceEncoder::Precomputed(Arc::new(file))
        }
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, canonical_json(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn stats(config: &RunConfig) -> anyhow::Result<()> {
    let corpus = corpus(config)?;
    let stats = corpus_stats(&corpus);
    println!("{stats}");
    write_json(&config.out.join("stats.json"), &stats)
}

pub fn preprocess(config: &RunConfig) -> anyhow::Result<()> {
    let corpus = corpus(config)?;
    let size = config.train.chunk_size;
    let mut csv = create(&config.out.join("chunks.csv"))?;
    writeln!(csv, "conversation_id,chunk,start,len")?;
    let mut total = 0;
    for conv in &corpus.train {
        let chunks = slice_chunks(conv, size)?;
        total += chunks.len();
        for (i, c) in chunks.iter().enumerate() {
            writeln!(csv, "{},{},{},{}", conv.conversation_id, i, c.start, c.len())?;
        }
    }
    csv.flush()?;
    for conv in corpus.train.iter().take(config.preview) {
        let turns = relabel_turns(&conv.speakers())?;
        let lengths: Vec<usize> = slice_chunks(conv, size)?.iter().map(|c| c.len()).collect();
        println!("{} ({} utterances, {} turn changes)", conv.conversation_id, conv.len(), turns.flips());
        for (u, s) in conv.utterances.iter().zip(turns.labels()) {
            println!("  {s} {:<12} {}", u.speaker, u.text);
        }
        println!("  chunks of {size}: {lengths:?}");
    }
    println!("{total} training chunks of at most {size} utterances");
    Ok(())
}

pub fn train_cmd(config: &RunConfig) -> anyhow::Result<()> {
    let corpus = corpus(config)?;
    let encoder = encoder(config, config.train.encoder)?;
    let outcome = train(&corpus, &config.train, &encoder)?;
    for m in &outcome.history {
        println!(
            "epoch {:>3}  loss {:.4}  train {:.4}  val {:.4}  test {:.4}",
            m.epoch, m.train_loss, m.train_acc, m.val_acc, m.test_acc
        );
    }
    let mut metrics = create(&config.out.join("metrics.csv"))?;
    write_history_csv(&outcome.history, &mut metrics)?;
    metrics.flush()?;
    let path = config.out.join("checkpoint.bin");
    fs::write(&path, save_checkpoint(&outcome.best)?).with_context(|| format!("writing {}", path.display()))?;
    let report = evaluate(&outcome.best, &corpus.test, &encoder, "test")?;
    write_json(&config.out.join("report_test.json"), &report)?;
    println!(
        "best epoch {}: val {:.4}, test {:.4}; checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_acc,
        outcome.test_acc,
        path.display()
    );
    Ok(())
}

/// The split's conversations with labels and topics re-indexed into the
/// checkpoint's vocabularies.
fn align(corpus: &Corpus, conversations: &[Conversation], trained: &TrainedModel) -> anyhow::Result<Vec<Conversation>> {
    conversations
        .iter()
        .map(|conv| {
            let mut conv = conv.clone();
            for u in &mut conv.utterances {
                let name = corpus.label_vocab.name(u.da_label).unwrap_or_default();
                u.da_label = match trained.label_vocab.get(name) {
                    Some(i) => i,
                    None => bail!("label {name:?} is not known to the checkpoint"),
                };
            }
            conv.topic = match (conv.topic, &corpus.topic_vocab, &trained.topic_vocab) {
                (Some(m), Some(ours), Some(theirs)) => ours.name(m).and_then(|n| theirs.get(n)),
                _ => None,
            };
            Ok(conv)
        })
        .collect()
}

pub fn eval(config: &RunConfig) -> anyhow::Result<()> {
    let path = config.checkpoint.as_deref().expect("validated");
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let trained = load_checkpoint(&bytes).with_context(|| format!("loading {}", path.display()))?;
    let corpus = corpus(config)?;
    let conversations = align(&corpus, corpus.split(config.split), &trained)?;
    let encoder = encoder(config, trained.config.encoder)?;
    let report = evaluate(&trained, &conversations, &encoder, config.split.name())?;
    print!("{report}");
    write_json(&config.out.join(format!("eval_{}.json", config.split.name())), &report)
}

pub fn ablate(config: &RunConfig) -> anyhow::Result<()> {
    let corpus = corpus(config)?;
    let encoder = encoder(config, config.train.encoder)?;
    let table = run_ablation(&corpus, &config.train, &encoder)?;
    print!("{table}");
    let mut csv = create(&config.out.join("ablation.csv"))?;
    table.write_csv(&mut csv)?;
    csv.flush()?;
    write_json(&config.out.join("ablation.json"), &table)
}

pub fn sweep(config: &RunConfig) -> anyhow::Result<()> {
    let corpus = corpus(config)?;
    let encoder = encoder(config, config.train.encoder)?;
    let table = chunk_size_sweep(&corpus, &config.train, &config.sizes, &encoder)?;
    print!("{table}");
    let mut csv = create(&config.out.join("sweep.csv"))?;
    table.write_csv(&mut csv)?;
    csv.flush()?;
    Ok(())
}

pub fn synth(config: &RunConfig) -> anyhow::Result<()> {
    let corpus = generate_synthetic(&config.synth)?;
    save_corpus(&corpus, &config.out)?;
    println!("{}", corpus_stats(&corpus));
    println!("wrote synthetic corpus to {}", config.out.display());
    Ok(())
}
