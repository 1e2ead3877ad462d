//! Small generated corpora with matching embedding tables, used for smoke
//! tests, benchmarks and desk-scale runs.

use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::label::Label;

const NEGATIVE_CUES: &[&str] = &[
    "awful", "hate", "terrible", "worst", "sad", "angry", "broken", "ugh",
];
const NEUTRAL_CUES: &[&str] = &[
    "meeting", "tuesday", "schedule", "report", "update", "station", "agenda", "memo",
];
const POSITIVE_CUES: &[&str] = &[
    "love",
    "great",
    "awesome",
    "happy",
    "best",
    "amazing",
    "wonderful",
    "yay",
];
const FILLERS: &[&str] = &[
    "the", "a", "today", "this", "game", "phone", "team", "just", "really", "with", "my", "is",
];

pub fn cue_words(label: Label) -> &'static [&'static str] {
    match label {
        Label::Negative => NEGATIVE_CUES,
        Label::Neutral => NEUTRAL_CUES,
        Label::Positive => POSITIVE_CUES,
    }
}

/// Every word the generator can emit.
pub fn vocabulary() -> Vec<&'static str> {
    Label::ALL
        .iter()
        .flat_map(|&l| cue_words(l).iter().copied())
        .chain(FILLERS.iter().copied())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTweet {
    pub id: String,
    pub label: Label,
    pub text: String,
}

impl SyntheticTweet {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.id, self.label, self.text)
    }
}

/// `n` tweets with balanced labels. Each tweet holds one or two cue words of
/// its class among shared filler words, so the classes are separable.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<SyntheticTweet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = Label::ALL[i % 3];
            let cues = rng.random_range(1..=2);
            let fillers = rng.random_range(2..=6);
            let mut words: Vec<&str> = Vec::with_capacity(cues + fillers);
            for _ in 0..cues {
                words.push(cue_words(label).choose(&mut rng).expect("non-empty"));
            }
            for _ in 0..fillers {
                words.push(FILLERS.choose(&mut rng).expect("non-empty"));
            }
            words.shuffle(&mut rng);
            SyntheticTweet {
                id: format!("s{seed}-{i}"),
                label,
                text: words.join(" "),
            }
        })
        .collect()
}

/// Dataset file contents for `tweets`.
pub fn corpus_text(tweets: &[SyntheticTweet]) -> String {
    tweets.iter().map(|t| t.to_line() + "\n").collect()
}

/// Embedding file contents covering [`vocabulary`], components uniform in
/// [-1, 1].
pub fn embedding_text(dim: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary();
    let mut s = format!("{} {}\n", vocab.len(), dim);
    for word in vocab {
        s.push_str(word);
        for _ in 0..dim {
            let _ = write!(s, " {:.6}", rng.random_range(-1.0..=1.0));
        }
        s.push('\n');
    }
    s
}
