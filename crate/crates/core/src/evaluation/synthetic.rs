use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, Corpus, Utterance, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticRule {
    /// Each utterance's cue token alone determines its label.
    ContentOnly,
    /// The cue token picks a pair of labels `(2p, 2p + 1)`; whether the
    /// speaker changed picks the member.
    TurnDependent,
}

impl std::str::FromStr for SyntheticRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "content_only" => Ok(SyntheticRule::ContentOnly),
            "turn_dependent" => Ok(SyntheticRule::TurnDependent),
            other => Err(format!("unknown synthetic rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub train_conversations: usize,
    pub val_conversations: usize,
    pub test_conversations: usize,
    /// Conversation lengths are uniform in `[min_len, max_len]`.
    pub min_len: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub num_classes: usize,
    /// Filler tokens per utterance are uniform in `[0, max_fillers]`.
    pub max_fillers: usize,
    /// Speakers per conversation are uniform in `[2, max_speakers]`.
    pub max_speakers: usize,
    /// Random (label-independent) conversation topics; 0 for none.
    pub num_topics: usize,
    pub rule: SyntheticRule,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            train_conversations: 20,
            val_conversations: 5,
            test_conversations: 5,
            min_len: 5,
            max_len: 30,
            vocab_size: 50,
            num_classes: 4,
            max_fillers: 2,
            max_speakers: 3,
            num_topics: 0,
            rule: SyntheticRule::ContentOnly,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Number of distinct cue tokens (`w0 .. w{cues-1}`).
    pub fn num_cues(&self) -> usize {
        match self.rule {
            SyntheticRule::ContentOnly => self.num_classes,
            SyntheticRule::TurnDependent => self.num_classes / 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Argument(format!(
                "need num_classes > 0 and 1 <= min_len <= max_len, got {self:?}"
            )));
        }
        if self.rule == SyntheticRule::TurnDependent && !self.num_classes.is_multiple_of(2) {
            return Err(Error::Argument(
                "turn_dependent needs an even number of classes".into(),
            ));
        }
        if self.vocab_size <= self.num_cues() {
            return Err(Error::Argument(format!(
                "vocab_size {} leaves no filler tokens after {} cues",
                self.vocab_size,
                self.num_cues()
            )));
        }
        if self.max_speakers < 2 {
            return Err(Error::Argument("max_speakers must be at least 2".into()));
        }
        Ok(())
    }
}

pub fn label_name(class: usize) -> String {
    format!("da{class:02}")
}

/// Builds a corpus from `spec`, deterministic in `spec.seed`.
///
/// Under [`SyntheticRule::TurnDependent`], at each step after the first the
/// speaker changes with probability 1/2 (to any other participant), and the
/// label is `2p + changed`. The first utterance has no predecessor, so its
/// member bit is a fair coin. The text carries no speaker information.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cues = spec.num_cues();
    let word = |i: usize| format!("w{i}");

    let make_split = |prefix: &str, count: usize, rng: &mut ChaCha8Rng| -> Vec<Conversation> {
        (0..count)
            .map(|i| {
                let id = format!("{prefix}-{i:04}");
                let len = rng.gen_range(spec.min_len..=spec.max_len);
                let parties = rng.gen_range(2..=spec.max_speakers);
                let mut names: Vec<String> = (0..spec.max_speakers).map(|s| format!("spk{s}")).collect();
                names.shuffle(rng);
                names.truncate(parties);
                let topic = (spec.num_topics > 0).then(|| rng.gen_range(0..spec.num_topics));

                let mut speaker = rng.gen_range(0..parties);
                let mut utterances = Vec::with_capacity(len);
                for t in 0..len {
                    let changed = if t == 0 {
                        rng.gen_bool(0.5)
                    } else {
                        let change = rng.gen_bool(0.5);
                        if change {
                            let shift = rng.gen_range(1..parties);
                            speaker = (speaker + shift) % parties;
                        }
                        change
                    };
                    let cue = rng.gen_range(0..cues);
                    let label = match spec.rule {
                        SyntheticRule::ContentOnly => cue,
                        SyntheticRule::TurnDependent => 2 * cue + usize::from(changed),
                    };
                    let fillers = rng.gen_range(0..=spec.max_fillers);
                    let mut tokens: Vec<String> = (0..fillers)
                        .map(|_| word(rng.gen_range(cues..spec.vocab_size)))
                        .collect();
                    let at = rng.gen_range(0..=tokens.len());
                    tokens.insert(at, word(cue));
                    utterances.push(Utterance::new(
                        format!("{id}-u{t:03}"),
                        names[speaker].clone(),
                        tokens.join(" "),
                        label,
                    ));
                }
                Conversation {
                    conversation_id: id,
                    utterances,
                    topic,
                }
            })
            .collect()
    };

    let train = make_split("train", spec.train_conversations, &mut rng);
    let val = make_split("val", spec.val_conversations, &mut rng);
    let test = make_split("test", spec.test_conversations, &mut rng);
    let labels = Vocab::from_items((0..spec.num_classes).map(label_name));
    let topics = (spec.num_topics > 0)
        .then(|| Vocab::from_items((0..spec.num_topics).map(|m| format!("topic{m:02}"))));
    Ok(Corpus::new(train, val, test, labels, topics))
}
