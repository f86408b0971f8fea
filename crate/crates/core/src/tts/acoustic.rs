use std::collections::BTreeMap;

use super::{Result, TtsError};
use crate::corpus::{Corpus, PhonemeVocab, Utterance};
use crate::numerics::{Prng, Tensor};

/// Synthetic stand-in for spectrogram frames: each phoneme owns a code
/// vector and a duration; neighbouring phonemes blend on boundary frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticSpec {
    pub frame_dim: usize,
    symbols: Vec<String>,
    codes: Tensor,
    durations: Vec<usize>,
    pub coarticulation: f64,
    pub noise: f64,
}

impl AcousticSpec {
    pub const COARTICULATION: f64 = 0.25;
    pub const NOISE: f64 = 0.05;

    /// Codes ~ N(0, 1) and durations uniform in {2, 3, 4}, fixed by `seed`.
    pub fn new(vocab: &PhonemeVocab, frame_dim: usize, seed: u64) -> Self {
        let mut rng = Prng::new(seed);
        let codes = Tensor::randn(&[vocab.len().max(1), frame_dim], 1.0, &mut rng);
        let durations = (0..vocab.len()).map(|_| 2 + rng.below(3)).collect();
        Self {
            frame_dim,
            symbols: vocab.symbols().to_vec(),
            codes,
            durations,
            coarticulation: Self::COARTICULATION,
            noise: Self::NOISE,
        }
    }

    /// Explicit codes and durations, one per symbol.
    pub fn from_parts(symbols: Vec<String>, codes: Tensor, durations: Vec<usize>, noise: f64) -> Self {
        assert_eq!(symbols.len(), codes.rows());
        assert_eq!(symbols.len(), durations.len());
        Self {
            frame_dim: codes.cols(),
            symbols,
            codes,
            durations,
            coarticulation: Self::COARTICULATION,
            noise,
        }
    }

    fn index(&self, phoneme: &str) -> Result<usize> {
        self.symbols
            .iter()
            .position(|s| s == phoneme)
            .ok_or_else(|| TtsError::UnknownPhoneme(phoneme.to_string()))
    }

    pub fn code(&self, phoneme: &str) -> Result<&[f64]> {
        Ok(self.codes.row(self.index(phoneme)?))
    }

    pub fn duration(&self, phoneme: &str) -> Result<usize> {
        Ok(self.durations[self.index(phoneme)?])
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Frame matrix `[Σ durations × F]` for one utterance; noise is seeded by
/// `(utterance id, seed)`.
pub fn synth_target(utt: &Utterance, spec: &AcousticSpec, seed: u64) -> Result<Tensor> {
    if utt.phonemes.is_empty() {
        return Err(TtsError::EmptyPhonemeSequence(utt.id.clone()));
    }
    let f = spec.frame_dim;
    let zero = vec![0.0; f];
    let mut rng = Prng::new(seed).fork(fnv1a(&utt.id));
    let mut data = Vec::new();
    for (k, p) in utt.phonemes.iter().enumerate() {
        let code = spec.code(p)?;
        let next = match utt.phonemes.get(k + 1) {
            Some(q) => spec.code(q)?,
            None => &zero,
        };
        let d = spec.duration(p)?;
        for frame in 0..d {
            let w = if frame + 1 == d { spec.coarticulation } else { 0.0 };
            for j in 0..f {
                data.push((1.0 - w) * code[j] + w * next[j] + spec.noise * rng.gaussian());
            }
        }
    }
    let rows = data.len() / f;
    Ok(Tensor::matrix(rows, f, data))
}

/// Acoustic targets for every utterance, keyed by id.
pub fn build_targets(corpus: &Corpus, spec: &AcousticSpec, seed: u64) -> Result<BTreeMap<String, Tensor>> {
    corpus
        .utterances
        .iter()
        .map(|u| Ok((u.id.clone(), synth_target(u, spec, seed)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(phonemes: &[&str]) -> Utterance {
        Utterance {
            id: "u1".into(),
            graphemes: vec![],
            phonemes: phonemes.iter().map(|s| s.to_string()).collect(),
            alignment: None,
        }
    }

    #[test]
    fn single_phoneme_blends_to_zero() {
        let code = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]);
        let spec = AcousticSpec::from_parts(vec!["a".into()], code, vec![2], 0.0);
        let frames = synth_target(&utt(&["a"]), &spec, 1).unwrap();
        assert_eq!(frames.data(), &[1.0, -2.0, 0.5, 0.75, -1.5, 0.375]);
    }

    #[test]
    fn empty_and_deterministic() {
        let vocab = PhonemeVocab::new(["a", "b"]);
        let spec = AcousticSpec::new(&vocab, 4, 9);
        assert!(matches!(synth_target(&utt(&[]), &spec, 1), Err(TtsError::EmptyPhonemeSequence(_))));
        let u = utt(&["a", "b", "a"]);
        let a = synth_target(&u, &spec, 3).unwrap();
        assert_eq!(a, synth_target(&u, &spec, 3).unwrap());
        assert_ne!(a, synth_target(&u, &spec, 4).unwrap());
        let expected_rows: usize = ["a", "b", "a"].iter().map(|p| spec.duration(p).unwrap()).sum();
        assert_eq!(a.rows(), expected_rows);
    }
}
