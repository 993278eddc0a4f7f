use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Conversation, Corpus, Split, Utterance, Vocab};

/// Optional file declaring the DA label set, one name per line.
pub const LABELS_FILE: &str = "labels.txt";
/// Optional file declaring the topic set, one name per line.
pub const TOPICS_FILE: &str = "topics.txt";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtterance {
    utterance_id: String,
    speaker: String,
    text: String,
    da_label: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConversation {
    conversation_id: String,
    #[serde(default)]
    topic: Option<String>,
    utterances: Vec<RawUtterance>,
}

fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.jsonl", split.name()))
}

fn read_split(path: &Path) -> Result<Vec<(usize, RawConversation)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawConversation = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if raw.utterances.is_empty() {
            return Err(Error::Schema(format!(
                "{}:{line_no}: conversation {:?} has no utterances",
                path.display(),
                raw.conversation_id
            )));
        }
        let mut seen = HashSet::new();
        for u in &raw.utterances {
            if !seen.insert(u.utterance_id.as_str()) {
                return Err(Error::Schema(format!(
                    "{}:{line_no}: duplicate utterance_id {:?} in conversation {:?}",
                    path.display(),
                    u.utterance_id,
                    raw.conversation_id
                )));
            }
        }
        out.push((line_no, raw));
    }
    Ok(out)
}

fn read_name_list(path: &Path) -> Result<Option<Vec<String>>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Some(
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
    ))
}

type RawSplit = (Split, PathBuf, Vec<(usize, RawConversation)>);

/// Loads `train.jsonl`, `val.jsonl` and `test.jsonl` from `dir`.
///
/// The label set comes from `labels.txt` when present, otherwise from the
/// sorted union of labels over all splits. Topics work the same way with
/// `topics.txt`. The token vocabulary is built from the train split only.
pub fn load_corpus(dir: &Path, format: CorpusFormat) -> Result<Corpus> {
    let CorpusFormat::Jsonl = format;
    let raw: Vec<RawSplit> = Split::ALL
        .iter()
        .map(|&s| {
            let path = split_path(dir, s);
            read_split(&path).map(|convs| (s, path, convs))
        })
        .collect::<Result<_>>()?;

    let all_convs = || raw.iter().flat_map(|(_, _, c)| c.iter().map(|(_, c)| c));
    let label_vocab = match read_name_list(&dir.join(LABELS_FILE))? {
        Some(names) => Vocab::from_items(names),
        None => Vocab::sorted(
            all_convs().flat_map(|c| c.utterances.iter().map(|u| u.da_label.clone())),
        ),
    };
    let topic_vocab = match read_name_list(&dir.join(TOPICS_FILE))? {
        Some(names) => Some(Vocab::from_items(names)),
        None => {
            let topics: BTreeSet<String> = all_convs().filter_map(|c| c.topic.clone()).collect();
            (!topics.is_empty()).then(|| Vocab::from_items(topics))
        }
    };

    let mut splits: [Vec<Conversation>; 3] = Default::default();
    for (split, path, convs) in raw {
        let target = &mut splits[split as usize];
        for (line_no, conv) in convs {
            let topic = match &conv.topic {
                None => None,
                Some(name) => Some(
                    topic_vocab
                        .as_ref()
                        .and_then(|v| v.get(name))
                        .ok_or_else(|| {
                            Error::Schema(format!(
                                "{}:{line_no}: unknown topic {name:?}",
                                path.display()
                            ))
                        })?,
                ),
            };
            let utterances = conv
                .utterances
                .into_iter()
                .map(|u| {
                    let label = label_vocab.get(&u.da_label).ok_or_else(|| {
                        Error::Schema(format!(
                            "{}:{line_no}: da_label {:?} not in label set",
                            path.display(),
                            u.da_label
                        ))
                    })?;
                    Ok(Utterance::new(u.utterance_id, u.speaker, u.text, label))
                })
                .collect::<Result<Vec<_>>>()?;
            target.push(Conversation {
                conversation_id: conv.conversation_id,
                utterances,
                topic,
            });
        }
    }
    let [train, val, test] = splits;
    Ok(Corpus::new(train, val, test, label_vocab, topic_vocab))
}

/// Writes `corpus` to `dir` in the layout read by [`load_corpus`], including
/// the label and topic lists so indices survive the round trip.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let path = split_path(dir, split);
        let mut buf = Vec::new();
        for conv in corpus.split(split) {
            let raw = RawConversation {
                conversation_id: conv.conversation_id.clone(),
                topic: conv.topic.map(|t| {
                    corpus
                        .topic_vocab
                        .as_ref()
                        .and_then(|v| v.name(t))
                        .expect("topic index within vocabulary")
                        .to_string()
                }),
                utterances: conv
                    .utterances
                    .iter()
                    .map(|u| RawUtterance {
                        utterance_id: u.utterance_id.clone(),
                        speaker: u.speaker.clone(),
                        text: u.text.clone(),
                        da_label: corpus
                            .label_vocab
                            .name(u.da_label)
                            .expect("label index within vocabulary")
                            .to_string(),
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut buf, &raw)?;
            buf.push(b'\n');
        }
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    }
    write_name_list(&dir.join(LABELS_FILE), corpus.label_vocab.items())?;
    let topics_path = dir.join(TOPICS_FILE);
    match &corpus.topic_vocab {
        Some(v) => write_name_list(&topics_path, v.items())?,
        None if topics_path.exists() => {
            fs::remove_file(&topics_path).map_err(|e| Error::io(&topics_path, e))?
        }
        None => {}
    }
    Ok(())
}

fn write_name_list(path: &Path, names: &[String]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for n in names {
        writeln!(f, "{n}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
