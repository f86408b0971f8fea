use super::{AnalysisError, Result};
use crate::corpus::{is_vowel, phonetize_toy, GraphemeVocab, PhonemeVocab, Rule, Utterance, SILENT_LABEL};
use crate::g2p::{probe_predict, ProbeMode, ProbeModel};
use crate::metrics::levenshtein_align;
use crate::numerics::{Prng, Tensor};
use crate::tts::EncoderModel;

/// Predictions before and after replacing the host embedding at the swap
/// site with the donor's.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapReport {
    pub original: Vec<String>,
    pub swapped: Vec<String>,
    /// Gold phoneme of the host at the site (first of its span).
    pub host_phoneme: String,
    /// Gold phoneme of the donor position.
    pub donor_phoneme: String,
    /// Predicted phoneme aligned to the site, before and after.
    pub site_original: Option<String>,
    pub site_swapped: Option<String>,
    /// Gold positions other than the site whose aligned prediction changed.
    pub changed_elsewhere: usize,
}

impl SwapReport {
    pub fn carries_donor(&self) -> bool {
        self.site_swapped.as_deref() == Some(self.donor_phoneme.as_str())
    }
}

fn ids(u: &Utterance, vocab: &GraphemeVocab) -> Result<Vec<usize>> {
    vocab
        .encode(&u.graphemes)
        .ok_or_else(|| AnalysisError::InvalidConfig(format!("utterance {} has graphemes outside the vocabulary", u.id)))
}

fn aligned(gold: &[String], prediction: &[String]) -> Vec<Option<String>> {
    let summary = levenshtein_align(gold, prediction);
    (0..gold.len())
        .map(|r| summary.aligned_hypothesis(r).map(|h| prediction[h].clone()))
        .collect()
}

/// Replace `host`'s embedding at `i` with `donor`'s at `j` and decode both
/// sequences with an embedding-mode probe.
#[allow(clippy::too_many_arguments)]
pub fn swap_and_probe(
    encoder: &EncoderModel,
    probe: &ProbeModel,
    graphemes: &GraphemeVocab,
    phonemes: &PhonemeVocab,
    host: &Utterance,
    i: usize,
    donor: &Utterance,
    j: usize,
) -> Result<SwapReport> {
    if probe.mode() != ProbeMode::Embedding {
        return Err(AnalysisError::WrongProbeMode);
    }
    if i >= host.graphemes.len() {
        return Err(AnalysisError::PositionOutOfRange { position: i, len: host.graphemes.len() });
    }
    if j >= donor.graphemes.len() {
        return Err(AnalysisError::PositionOutOfRange { position: j, len: donor.graphemes.len() });
    }
    let h = encoder.encode(&ids(host, graphemes)?)?;
    let d = encoder.encode(&ids(donor, graphemes)?)?;
    let mut data = h.data().to_vec();
    let width = h.cols();
    data[i * width..(i + 1) * width].copy_from_slice(d.row(j));
    let swapped_features = Tensor::matrix(h.rows(), width, data);
    let original = phonemes.decode(&probe_predict(probe, &h)?);
    let swapped = phonemes.decode(&probe_predict(probe, &swapped_features)?);
    let site = host
        .alignment
        .as_ref()
        .and_then(|a| a.get(i))
        .filter(|span| !span.is_empty())
        .map(|span| span.start);
    let before = aligned(&host.phonemes, &original);
    let after = aligned(&host.phonemes, &swapped);
    let changed_elsewhere = (0..host.phonemes.len())
        .filter(|&r| Some(r) != site && before[r] != after[r])
        .count();
    Ok(SwapReport {
        site_original: site.and_then(|r| before[r].clone()),
        site_swapped: site.and_then(|r| after[r].clone()),
        host_phoneme: host.label_at(i).unwrap_or(SILENT_LABEL).to_string(),
        donor_phoneme: donor.label_at(j).unwrap_or(SILENT_LABEL).to_string(),
        original,
        swapped,
        changed_elsewhere,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Class {
    Vowel,
    Consonant,
    Space,
    Punctuation,
    Boundary,
}

fn class(c: Option<&char>) -> Class {
    match c {
        None => Class::Boundary,
        Some(&c) if is_vowel(c) => Class::Vowel,
        Some(&c) if c.is_alphabetic() => Class::Consonant,
        Some(' ') => Class::Space,
        Some(_) => Class::Punctuation,
    }
}

/// Rule fired at a position plus the classes of its two neighbours; two
/// positions are context-matched when their keys are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContextKey {
    rule: Rule,
    before: Class,
    after: Class,
}

pub fn context_keys(u: &Utterance) -> Vec<ContextKey> {
    let rules = phonetize_toy(&u.graphemes).rules;
    (0..u.graphemes.len())
        .map(|p| ContextKey {
            rule: rules[p],
            before: class(p.checked_sub(1).and_then(|q| u.graphemes.get(q))),
            after: class(u.graphemes.get(p + 1)),
        })
        .collect()
}

/// Host and donor positions for one swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapPair {
    pub host: usize,
    pub host_position: usize,
    pub donor: usize,
    pub donor_position: usize,
}

/// Sample up to `count` distinct-utterance pairs. Hosts are pronounced
/// consonants under the identity rule. Matched donors share the host's
/// context key; mismatched donors were produced by a different rule. Donor
/// phoneme and grapheme always differ from the host's.
pub fn sample_swap_pairs(utterances: &[&Utterance], count: usize, matched: bool, seed: u64) -> Vec<SwapPair> {
    let keys: Vec<Vec<ContextKey>> = utterances.iter().map(|u| context_keys(u)).collect();
    let mut sites: Vec<(usize, usize)> = Vec::new();
    for (u, utt) in utterances.iter().enumerate() {
        for p in 0..utt.graphemes.len() {
            let label = utt.label_at(p).unwrap_or(SILENT_LABEL);
            if utt.graphemes[p].is_alphabetic() && label != SILENT_LABEL {
                sites.push((u, p));
            }
        }
    }
    let mut rng = Prng::new(seed);
    let mut hosts: Vec<(usize, usize)> = sites
        .iter()
        .copied()
        .filter(|&(u, p)| keys[u][p].rule == Rule::Identity && !is_vowel(utterances[u].graphemes[p]))
        .collect();
    rng.shuffle(&mut hosts);
    let mut pairs = Vec::new();
    for (hu, hp) in hosts {
        if pairs.len() == count {
            break;
        }
        let host = utterances[hu];
        let hkey = keys[hu][hp];
        let candidates: Vec<(usize, usize)> = sites
            .iter()
            .copied()
            .filter(|&(du, dp)| {
                let donor = utterances[du];
                let dkey = keys[du][dp];
                du != hu
                    && donor.graphemes[dp] != host.graphemes[hp]
                    && donor.label_at(dp) != host.label_at(hp)
                    && if matched { dkey == hkey } else { dkey.rule != hkey.rule }
            })
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let (du, dp) = candidates[rng.below(candidates.len())];
        pairs.push(SwapPair {
            host: hu,
            host_position: hp,
            donor: du,
            donor_position: dp,
        });
    }
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapSummary {
    pub pairs: usize,
    /// Fraction of swaps whose site prediction is the donor phoneme.
    pub donor_rate: f64,
    /// Fraction of swaps changing at most one prediction off the site.
    pub local_rate: f64,
    pub reports: Vec<SwapReport>,
}

#[allow(clippy::too_many_arguments)]
pub fn run_swaps(
    encoder: &EncoderModel,
    probe: &ProbeModel,
    graphemes: &GraphemeVocab,
    phonemes: &PhonemeVocab,
    utterances: &[&Utterance],
    pairs: &[SwapPair],
) -> Result<SwapSummary> {
    let reports = pairs
        .iter()
        .map(|p| {
            swap_and_probe(
                encoder,
                probe,
                graphemes,
                phonemes,
                utterances[p.host],
                p.host_position,
                utterances[p.donor],
                p.donor_position,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let n = reports.len().max(1) as f64;
    Ok(SwapSummary {
        pairs: reports.len(),
        donor_rate: reports.iter().filter(|r| r.carries_donor()).count() as f64 / n,
        local_rate: reports.iter().filter(|r| r.changed_elsewhere <= 1).count() as f64 / n,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabs, generate_corpus};
    use crate::tts::EncoderConfig;

    fn setup() -> (crate::corpus::Corpus, GraphemeVocab, PhonemeVocab, EncoderModel, ProbeModel) {
        let corpus = generate_corpus(20, 3);
        let (gv, pv) = build_vocabs(&corpus).unwrap();
        let cfg = EncoderConfig {
            embed_dim: 6,
            bank_width: 2,
            bank_channels: 3,
            hidden: 5,
            self_attention: false,
        };
        let encoder = EncoderModel::new(gv.len(), cfg, &mut Prng::new(1));
        let probe = ProbeModel::new(ProbeMode::Embedding, 10, pv.len() + 1, &mut Prng::new(2));
        (corpus, gv, pv, encoder, probe)
    }

    #[test]
    fn self_swap_is_a_no_op() {
        let (corpus, gv, pv, enc, probe) = setup();
        let u = &corpus.utterances[0];
        let r = swap_and_probe(&enc, &probe, &gv, &pv, u, 2, u, 2).unwrap();
        assert_eq!(r.original, r.swapped);
        assert_eq!(r.changed_elsewhere, 0);
    }

    #[test]
    fn errors() {
        let (corpus, gv, pv, enc, _) = setup();
        let u = &corpus.utterances[0];
        let raw = ProbeModel::new(ProbeMode::Raw, gv.len(), pv.len() + 1, &mut Prng::new(2));
        assert!(matches!(
            swap_and_probe(&enc, &raw, &gv, &pv, u, 0, u, 0),
            Err(AnalysisError::WrongProbeMode)
        ));
        let (_, _, _, _, probe) = setup();
        let len = u.graphemes.len();
        assert!(matches!(
            swap_and_probe(&enc, &probe, &gv, &pv, u, len, u, 0),
            Err(AnalysisError::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn sampled_pairs_respect_context() {
        let (corpus, ..) = setup();
        let utts: Vec<&Utterance> = corpus.utterances.iter().collect();
        let matched = sample_swap_pairs(&utts, 10, true, 5);
        assert!(!matched.is_empty());
        for p in &matched {
            let hk = context_keys(utts[p.host])[p.host_position];
            let dk = context_keys(utts[p.donor])[p.donor_position];
            assert_eq!(hk, dk);
            assert_ne!(p.host, p.donor);
            assert_ne!(utts[p.host].label_at(p.host_position), utts[p.donor].label_at(p.donor_position));
        }
        for p in sample_swap_pairs(&utts, 10, false, 5) {
            let hk = context_keys(utts[p.host])[p.host_position];
            let dk = context_keys(utts[p.donor])[p.donor_position];
            assert_ne!(hk.rule, dk.rule);
        }
        assert_eq!(matched, sample_swap_pairs(&utts, 10, true, 5));
    }
}
