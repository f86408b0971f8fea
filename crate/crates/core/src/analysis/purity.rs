use std::collections::BTreeMap;

use super::{AnalysisError, Result};
use crate::tts::EmbeddingRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    pub k: usize,
    pub overall: f64,
    pub per_grapheme: BTreeMap<char, f64>,
    pub per_phoneme: BTreeMap<String, f64>,
}

/// Indices of the `k` nearest records to `i` by Euclidean distance, ties
/// broken by index.
pub fn nearest_neighbors(records: &[EmbeddingRecord], i: usize, k: usize) -> Vec<usize> {
    let a = &records[i].vector;
    let mut dist: Vec<(f64, usize)> = records
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, r)| (a.iter().zip(&r.vector).map(|(x, y)| (x - y) * (x - y)).sum(), j))
        .collect();
    let order = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k, order);
        dist.truncate(k);
    }
    dist.sort_by(order);
    dist.into_iter().map(|(_, j)| j).collect()
}

fn mean_by<K: Ord + Clone>(keys: impl Iterator<Item = K>, scores: &[f64]) -> BTreeMap<K, f64> {
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (key, &s) in keys.zip(scores) {
        let e = acc.entry(key).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

/// Fraction of each record's `k` nearest neighbours that share its label,
/// averaged overall, per grapheme and per phoneme label.
pub fn knn_purity(records: &[EmbeddingRecord], k: usize) -> Result<PurityReport> {
    if k == 0 || records.len() <= k {
        return Err(AnalysisError::TooFewRecords { n: records.len(), k });
    }
    let scores: Vec<f64> = (0..records.len())
        .map(|i| {
            let same = nearest_neighbors(records, i, k)
                .into_iter()
                .filter(|&j| records[j].label == records[i].label)
                .count();
            same as f64 / k as f64
        })
        .collect();
    Ok(PurityReport {
        k,
        overall: scores.iter().sum::<f64>() / scores.len() as f64,
        per_grapheme: mean_by(records.iter().map(|r| r.grapheme), &scores),
        per_phoneme: mean_by(records.iter().map(|r| r.label.clone()), &scores),
    })
}

/// The same records with each vector replaced by a one-hot grapheme code.
pub fn one_hot_baseline(records: &[EmbeddingRecord]) -> Vec<EmbeddingRecord> {
    let mut symbols: Vec<char> = records.iter().map(|r| r.grapheme).collect();
    symbols.sort_unstable();
    symbols.dedup();
    records
        .iter()
        .map(|r| {
            let mut v = vec![0.0; symbols.len()];
            v[symbols.binary_search(&r.grapheme).expect("collected above")] = 1.0;
            EmbeddingRecord {
                vector: v,
                ..r.clone()
            }
        })
        .collect()
}

pub const PUNCTUATION: [char; 4] = ['.', ',', '?', '!'];

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean cosine similarity among punctuation embeddings and between
/// punctuation and letter embeddings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PunctuationCohesion {
    pub within: f64,
    pub across: f64,
    pub punctuation: usize,
    pub letters: usize,
}

impl PunctuationCohesion {
    pub fn holds(&self) -> bool {
        self.within > self.across
    }
}

pub fn punctuation_cohesion(records: &[EmbeddingRecord]) -> Result<PunctuationCohesion> {
    let punct: Vec<&[f64]> = records
        .iter()
        .filter(|r| PUNCTUATION.contains(&r.grapheme))
        .map(|r| r.vector.as_slice())
        .collect();
    let letters: Vec<&[f64]> = records
        .iter()
        .filter(|r| r.grapheme.is_alphabetic())
        .map(|r| r.vector.as_slice())
        .collect();
    if punct.len() < 2 || letters.is_empty() {
        return Err(AnalysisError::TooFewRecords { n: punct.len(), k: 2 });
    }
    let mut within = 0.0;
    for i in 0..punct.len() {
        for j in i + 1..punct.len() {
            within += cosine(punct[i], punct[j]);
        }
    }
    within /= (punct.len() * (punct.len() - 1) / 2) as f64;
    let across = punct
        .iter()
        .flat_map(|p| letters.iter().map(move |l| cosine(p, l)))
        .sum::<f64>()
        / (punct.len() * letters.len()) as f64;
    Ok(PunctuationCohesion {
        within,
        across,
        punctuation: punct.len(),
        letters: letters.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;
    use proptest::prelude::*;

    fn rec(vector: Vec<f64>, grapheme: char, label: &str) -> EmbeddingRecord {
        EmbeddingRecord {
            vector,
            utterance_id: "u".into(),
            position: 0,
            grapheme,
            label: label.into(),
        }
    }

    #[test]
    fn uniform_labels_are_pure() {
        let mut rng = Prng::new(1);
        let recs: Vec<_> = (0..12).map(|_| rec(vec![rng.gaussian(), rng.gaussian()], 'a', "a")).collect();
        assert_eq!(knn_purity(&recs, 5).unwrap().overall, 1.0);
        assert!(matches!(knn_purity(&recs[..5], 5), Err(AnalysisError::TooFewRecords { n: 5, k: 5 })));
    }

    #[test]
    fn separated_clusters_are_pure() {
        let mut rng = Prng::new(2);
        let mut recs = Vec::new();
        for (centre, label) in [(0.0, "x"), (100.0, "y")] {
            for _ in 0..8 {
                recs.push(rec(vec![centre + rng.gaussian(), rng.gaussian()], 'n', label));
            }
        }
        let report = knn_purity(&recs, 7).unwrap();
        assert_eq!(report.overall, 1.0);
        assert_eq!(report.per_phoneme["x"], 1.0);
    }

    #[test]
    fn ties_resolve_by_index() {
        let recs = vec![
            rec(vec![0.0], 'a', "a"),
            rec(vec![1.0], 'b', "b"),
            rec(vec![-1.0], 'c', "c"),
            rec(vec![1.0], 'd', "d"),
        ];
        assert_eq!(nearest_neighbors(&recs, 0, 2), vec![1, 2]);
        assert_eq!(nearest_neighbors(&recs, 1, 1), vec![3]);
    }

    #[test]
    fn one_hot_groups_by_grapheme() {
        let recs = vec![rec(vec![0.3], 'n', "n"), rec(vec![9.0], 'n', "ã"), rec(vec![0.3], 'a', "a")];
        let base = one_hot_baseline(&recs);
        assert_eq!(base[0].vector, base[1].vector);
        assert_ne!(base[0].vector, base[2].vector);
    }

    #[test]
    fn punctuation_cluster() {
        let recs = vec![
            rec(vec![1.0, 0.1], '.', "∅"),
            rec(vec![0.9, 0.0], '!', "∅"),
            rec(vec![0.0, 1.0], 'a', "a"),
            rec(vec![0.1, 1.0], 'b', "b"),
        ];
        let c = punctuation_cohesion(&recs).unwrap();
        assert!(c.holds() && c.punctuation == 2 && c.letters == 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn invariant_under_rotation_and_shift(seed in 0u64..1000, angle in 0.0f64..6.28, shift in -5.0f64..5.0) {
            let mut rng = Prng::new(seed);
            let labels = ["a", "b", "c"];
            let recs: Vec<_> = (0..30)
                .map(|i| rec(vec![rng.gaussian() + i as f64 % 3.0, rng.gaussian()], 'x', labels[i % 3]))
                .collect();
            let (s, c) = angle.sin_cos();
            let moved: Vec<_> = recs
                .iter()
                .map(|r| rec(vec![c * r.vector[0] - s * r.vector[1] + shift, s * r.vector[0] + c * r.vector[1] - shift], 'x', &r.label))
                .collect();
            prop_assert_eq!(knn_purity(&recs, 4).unwrap(), knn_purity(&moved, 4).unwrap());
        }
    }
}
