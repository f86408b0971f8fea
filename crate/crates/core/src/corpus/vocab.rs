use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{Corpus, CorpusError, Result, Split};

/// Padding symbol, always id 0 of the grapheme vocabulary.
pub const PAD: &str = "⟨pad⟩";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphemeVocab {
    symbols: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl GraphemeVocab {
    /// Vocabulary over `symbols` (deduplicated, codepoint order) after the pad.
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Self {
        let sorted: BTreeSet<char> = symbols.into_iter().collect();
        let symbols: Vec<char> = sorted.into_iter().collect();
        let index = symbols.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        Self { symbols, index }
    }

    /// Number of ids including the pad.
    pub fn len(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<String> {
        match id {
            0 => Some(PAD.to_string()),
            _ => self.symbols.get(id - 1).map(|c| c.to_string()),
        }
    }

    /// All symbols in id order, pad first.
    pub fn symbols(&self) -> Vec<String> {
        std::iter::once(PAD.to_string())
            .chain(self.symbols.iter().map(char::to_string))
            .collect()
    }

    pub fn encode(&self, graphemes: &[char]) -> Option<Vec<usize>> {
        graphemes.iter().map(|&c| self.id(c)).collect()
    }
}

/// Phoneme ids `0..n`; the CTC blank is id `n`, never a stored symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeVocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeVocab {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Self {
        let sorted: BTreeSet<String> = symbols.into_iter().map(Into::into).collect();
        let symbols: Vec<String> = sorted.into_iter().collect();
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { symbols, index }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn id(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn encode(&self, phonemes: &[String]) -> Option<Vec<usize>> {
        phonemes.iter().map(|p| self.id(p)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.symbol(i).unwrap_or("?").to_string())
            .collect()
    }
}

/// Closed vocabularies from the train split; any dev/test symbol unseen in
/// train is an error.
pub fn build_vocabs(corpus: &Corpus) -> Result<(GraphemeVocab, PhonemeVocab)> {
    let train = corpus.split(Split::Train);
    if train.is_empty() {
        return Err(CorpusError::Empty);
    }
    let graphemes = GraphemeVocab::new(train.iter().flat_map(|u| u.graphemes.iter().copied()));
    let phonemes = PhonemeVocab::new(train.iter().flat_map(|u| u.phonemes.iter().cloned()));
    for split in [Split::Dev, Split::Test] {
        for u in corpus.split(split) {
            if let Some(&c) = u.graphemes.iter().find(|&&c| graphemes.id(c).is_none()) {
                return Err(CorpusError::UnknownSymbol { split, symbol: c.to_string() });
            }
            if let Some(p) = u.phonemes.iter().find(|p| phonemes.id(p).is_none()) {
                return Err(CorpusError::UnknownSymbol { split, symbol: p.clone() });
            }
        }
    }
    Ok((graphemes, phonemes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Splits, Utterance};

    fn utt(id: &str, text: &str) -> Utterance {
        Utterance::from_graphemes(id, text.chars().collect())
    }

    #[test]
    fn sorted_with_pad_first() {
        let v = GraphemeVocab::new(['b', 'a', 'b']);
        assert_eq!(v.symbols(), vec![PAD.to_string(), "a".into(), "b".into()]);
        assert_eq!(v.id('a'), Some(1));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn blank_follows_symbols() {
        let v = PhonemeVocab::new(["n", "ã"]);
        assert_eq!(v.blank_id(), 2);
        assert_eq!(v.symbols(), &["n".to_string(), "ã".to_string()]);
    }

    #[test]
    fn unseen_test_symbol() {
        let mut c = Corpus::new(vec![utt("a", "ta"), utt("b", "at"), utt("c", "qa")]);
        c.splits = Some(Splits { train: vec![0, 1], dev: vec![], test: vec![2] });
        assert_eq!(
            build_vocabs(&c),
            Err(CorpusError::UnknownSymbol { split: Split::Test, symbol: "q".into() })
        );
    }

    #[test]
    fn train_only() {
        let mut c = Corpus::new(vec![utt("a", "ba"), utt("b", "ab")]);
        c.splits = Some(Splits { train: vec![0], dev: vec![1], test: vec![] });
        let (g, p) = build_vocabs(&c).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(p.blank_id(), 2);
    }
}
