//! Parallel grapheme/phoneme corpora: normalisation, the toy phonetizer,
//! seeded generation, splitting, vocabularies and the text file format.

mod format;
mod generate;
mod phonetizer;
mod vocab;

pub use format::{read_corpus, read_splits, write_corpus, write_splits};
pub use generate::generate_corpus;
pub use phonetizer::{is_vowel, phonetize_toy, Phonetization, Rule, NASAL_A, NASAL_E, SH};
pub use vocab::{build_vocabs, GraphemeVocab, PhonemeVocab, PAD};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::numerics::Prng;

/// Label used for graphemes that produce no phoneme.
pub const SILENT_LABEL: &str = "∅";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("unsupported character {character:?} at position {position}")]
    UnsupportedCharacter { position: usize, character: char },
    #[error("insufficient data: {requested} held-out utterances requested from {available}")]
    InsufficientData { requested: usize, available: usize },
    #[error("symbol {symbol:?} in {split} split is absent from the train split")]
    UnknownSymbol { split: Split, symbol: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error("unknown utterance id {0:?}")]
    UnknownUtterance(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub graphemes: Vec<char>,
    pub phonemes: Vec<String>,
    /// Per-grapheme half-open span into `phonemes`; empty for silent graphemes.
    pub alignment: Option<Vec<Range<usize>>>,
}

impl Utterance {
    /// Phonetize `graphemes` with the toy rules and keep the alignment.
    pub fn from_graphemes(id: impl Into<String>, graphemes: Vec<char>) -> Self {
        let ph = phonetize_toy(&graphemes);
        Self {
            id: id.into(),
            graphemes,
            phonemes: ph.phonemes,
            alignment: Some(ph.alignment),
        }
    }

    /// First aligned phoneme of grapheme `pos`, or [`SILENT_LABEL`].
    pub fn label_at(&self, pos: usize) -> Option<&str> {
        let span = self.alignment.as_ref()?.get(pos)?;
        Some(if span.is_empty() {
            SILENT_LABEL
        } else {
            &self.phonemes[span.start]
        })
    }

    pub fn text(&self) -> String {
        self.graphemes.iter().collect()
    }
}

/// Index lists (ascending) into [`Corpus::utterances`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub splits: Option<Splits>,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>) -> Self {
        Self {
            utterances,
            splits: None,
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Utterances of `split`; an unsplit corpus is all train.
    pub fn split(&self, split: Split) -> Vec<&Utterance> {
        match &self.splits {
            Some(s) => s.get(split).iter().map(|&i| &self.utterances[i]).collect(),
            None if split == Split::Train => self.utterances.iter().collect(),
            None => Vec::new(),
        }
    }

    pub fn find(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }
}

/// NFC-normalise, lowercase, and tokenise into single-character graphemes.
/// Letters `a`–`z`, space and `. , ? !` are accepted.
pub fn normalize_text(raw: &str) -> Result<Vec<char>> {
    let mut out = Vec::new();
    for (position, character) in raw.nfc().enumerate() {
        let lower = if character.is_ascii_uppercase() {
            character.to_ascii_lowercase()
        } else {
            character
        };
        match lower {
            'a'..='z' | ' ' | '.' | ',' | '?' | '!' => out.push(lower),
            _ => return Err(CorpusError::UnsupportedCharacter { position, character }),
        }
    }
    Ok(out)
}

/// Seeded uniform hold-out of `test_n` and `dev_n` utterances; the rest is train.
pub fn split_corpus(mut corpus: Corpus, test_n: usize, dev_n: usize, seed: u64) -> Result<Corpus> {
    let n = corpus.len();
    if test_n + dev_n >= n {
        return Err(CorpusError::InsufficientData {
            requested: test_n + dev_n,
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    Prng::new(seed).shuffle(&mut order);
    let mut test = order[..test_n].to_vec();
    let mut dev = order[test_n..test_n + dev_n].to_vec();
    let mut train = order[test_n + dev_n..].to_vec();
    test.sort_unstable();
    dev.sort_unstable();
    train.sort_unstable();
    corpus.splits = Some(Splits { train, dev, test });
    Ok(corpus)
}
