use super::{normalize_text, Corpus, Utterance};
use crate::numerics::Prng;

const VOWEL_UNITS: &[(&str, u32)] = &[
    ("a", 6),
    ("e", 6),
    ("i", 4),
    ("o", 4),
    ("u", 3),
    ("ou", 2),
    ("an", 3),
    ("en", 3),
    ("in", 2),
    ("emb", 1),
];

const CONSONANT_UNITS: &[(&str, u32)] = &[
    ("b", 3),
    ("c", 2),
    ("d", 3),
    ("f", 2),
    ("g", 2),
    ("h", 1),
    ("j", 1),
    ("k", 1),
    ("l", 4),
    ("m", 4),
    ("n", 5),
    ("p", 3),
    ("r", 5),
    ("s", 5),
    ("t", 5),
    ("v", 2),
    ("z", 1),
    ("ch", 2),
];

fn pick<'a>(units: &[(&'a str, u32)], max_len: usize, rng: &mut Prng) -> Option<&'a str> {
    let fitting: Vec<_> = units.iter().filter(|(u, _)| u.len() <= max_len).collect();
    let total: u32 = fitting.iter().map(|(_, w)| w).sum();
    if total == 0 {
        return None;
    }
    let mut r = rng.below(total as usize) as u32;
    for (u, w) in fitting {
        if r < *w {
            return Some(u);
        }
        r -= w;
    }
    unreachable!()
}

fn sample_word(rng: &mut Prng) -> String {
    let len = 2 + rng.below(7);
    let roll = rng.uniform();
    let suffix = if roll < 0.12 {
        "s"
    } else if roll < 0.20 && len >= 4 {
        "ent"
    } else if roll < 0.32 {
        "e"
    } else {
        ""
    };
    let body_len = len - suffix.len();
    let mut word = String::with_capacity(len);
    let mut vowel = rng.uniform() < 0.5;
    while word.len() < body_len {
        let units = if vowel { VOWEL_UNITS } else { CONSONANT_UNITS };
        let unit = pick(units, body_len - word.len(), rng).unwrap_or("a");
        word.push_str(unit);
        if rng.uniform() < 0.85 {
            vowel = !vowel;
        }
    }
    word.push_str(suffix);
    word
}

fn sample_sentence(rng: &mut Prng) -> String {
    let words = 3 + rng.below(10);
    let mut s = String::new();
    for w in 0..words {
        if w > 0 {
            s.push(' ');
        }
        s.push_str(&sample_word(rng));
        if w + 1 < words && rng.uniform() < 0.08 {
            s.push(',');
        }
    }
    let end = rng.uniform();
    s.push(if end < 0.7 {
        '.'
    } else if end < 0.9 {
        '?'
    } else {
        '!'
    });
    s
}

/// Deterministic synthetic corpus of `n_sentences` phonetized utterances.
pub fn generate_corpus(n_sentences: usize, seed: u64) -> Corpus {
    let mut rng = Prng::new(seed);
    let mut utterances = Vec::with_capacity(n_sentences);
    while utterances.len() < n_sentences {
        let text = sample_sentence(&mut rng);
        let graphemes = normalize_text(&text).expect("generator emits the supported alphabet");
        let id = format!("utt{:06}", utterances.len() + 1);
        let utt = Utterance::from_graphemes(id, graphemes);
        if !utt.phonemes.is_empty() {
            utterances.push(utt);
        }
    }
    Corpus::new(utterances)
}
