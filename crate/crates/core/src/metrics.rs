//! Levenshtein alignment and phoneme error rate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty reference sequence{}", .0.as_ref().map(|id| format!(" for utterance {id}")).unwrap_or_default())]
    EmptyReference(Option<String>),
}

/// One step of an edit script, indices into reference / hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { reference: usize, hypothesis: usize },
    Substitute { reference: usize, hypothesis: usize },
    Delete { reference: usize },
    Insert { hypothesis: usize },
}

/// Edit counts relative to the reference; `distance = S + D + I`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EditSummary {
    pub distance: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    /// Backtraced script in reference order.
    pub script: Vec<EditOp>,
}

impl EditSummary {
    /// Hypothesis index aligned to reference position `r`, if it was kept or
    /// substituted.
    pub fn aligned_hypothesis(&self, r: usize) -> Option<usize> {
        self.script.iter().find_map(|op| match *op {
            EditOp::Match { reference, hypothesis } | EditOp::Substitute { reference, hypothesis }
                if reference == r =>
            {
                Some(hypothesis)
            }
            _ => None,
        })
    }
}

/// Unit-cost edit distance with a deterministic backtrace.
///
/// When several optimal scripts exist the backtrace prefers, at each cell,
/// match, then substitution, then deletion, then insertion.
pub fn levenshtein_align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditSummary {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        dp[i * w] = i;
    }
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            dp[i * w + j] = (dp[(i - 1) * w + j - 1] + cost)
                .min(dp[(i - 1) * w + j] + 1)
                .min(dp[i * w + j - 1] + 1);
        }
    }
    let mut summary = EditSummary {
        distance: dp[n * w + m],
        ..EditSummary::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * w + j - 1];
            if reference[i - 1] == hypothesis[j - 1] && here == diag {
                summary.script.push(EditOp::Match { reference: i - 1, hypothesis: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
            if reference[i - 1] != hypothesis[j - 1] && here == diag + 1 {
                summary.substitutions += 1;
                summary.script.push(EditOp::Substitute { reference: i - 1, hypothesis: j - 1 });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * w + j] + 1 {
            summary.deletions += 1;
            summary.script.push(EditOp::Delete { reference: i - 1 });
            i -= 1;
        } else {
            summary.insertions += 1;
            summary.script.push(EditOp::Insert { hypothesis: j - 1 });
            j -= 1;
        }
    }
    summary.script.reverse();
    summary
}

/// `(S + D + I) / |reference|`; can exceed 1.
pub fn per<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference(None));
    }
    Ok(levenshtein_align(reference, hypothesis).distance as f64 / reference.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusPer {
    /// Total edits over total reference length.
    pub micro: f64,
    /// Mean of per-utterance rates.
    pub macro_avg: f64,
    pub utterances: usize,
    /// Set when no pairs were scored and both rates are vacuously 0.
    pub empty: bool,
}

/// One scored utterance: id, gold reference, prediction.
pub struct PerPair<'a, T> {
    pub id: &'a str,
    pub reference: &'a [T],
    pub hypothesis: &'a [T],
}

pub fn corpus_per<T: PartialEq>(pairs: &[PerPair<'_, T>]) -> Result<CorpusPer, MetricsError> {
    if pairs.is_empty() {
        return Ok(CorpusPer {
            micro: 0.0,
            macro_avg: 0.0,
            utterances: 0,
            empty: true,
        });
    }
    let mut edits = 0usize;
    let mut ref_len = 0usize;
    let mut rate_sum = 0.0;
    for p in pairs {
        if p.reference.is_empty() {
            return Err(MetricsError::EmptyReference(Some(p.id.to_string())));
        }
        let d = levenshtein_align(p.reference, p.hypothesis).distance;
        edits += d;
        ref_len += p.reference.len();
        rate_sum += d as f64 / p.reference.len() as f64;
    }
    Ok(CorpusPer {
        micro: edits as f64 / ref_len as f64,
        macro_avg: rate_sum / pairs.len() as f64,
        utterances: pairs.len(),
        empty: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    /// Exhaustive shortest edit script by breadth-first search over strings.
    fn bfs_distance(a: &[char], b: &[char]) -> usize {
        use std::collections::{HashSet, VecDeque};
        let alphabet: Vec<char> = a.iter().chain(b).copied().collect::<HashSet<_>>().into_iter().collect();
        let max_len = a.len().max(b.len());
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([(a.to_vec(), 0usize)]);
        seen.insert(a.to_vec());
        while let Some((s, d)) = queue.pop_front() {
            if s == b {
                return d;
            }
            let mut next = Vec::new();
            for i in 0..s.len() {
                let mut t = s.clone();
                t.remove(i);
                next.push(t);
                for &c in &alphabet {
                    let mut t = s.clone();
                    t[i] = c;
                    next.push(t);
                }
            }
            if s.len() < max_len {
                for i in 0..=s.len() {
                    for &c in &alphabet {
                        let mut t = s.clone();
                        t.insert(i, c);
                        next.push(t);
                    }
                }
            }
            for t in next {
                if seen.insert(t.clone()) {
                    queue.push_back((t, d + 1));
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn identity_distance() {
        assert_eq!(levenshtein_align(&chars("abc"), &chars("abc")).distance, 0);
    }

    #[test]
    fn kitten_sitting() {
        let (a, b) = (chars("kitten"), chars("sitting"));
        assert_eq!(bfs_distance(&a, &b), 3);
        let s = levenshtein_align(&a, &b);
        assert_eq!(s.distance, 3);
        assert_eq!((s.substitutions, s.deletions, s.insertions), (2, 0, 1));
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let s = levenshtein_align(&chars("abc"), &[]);
        assert_eq!((s.distance, s.deletions), (3, 3));
    }

    #[test]
    fn per_cases() {
        let r: Vec<u32> = (0..10).collect();
        let mut h = r.clone();
        h[0] = 99;
        h.pop();
        assert!((per(&r, &h).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(per(&r, &r).unwrap(), 0.0);
        assert_eq!(per(&['a'], &['b', 'c']).unwrap(), 2.0);
        assert_eq!(per::<char>(&[], &['a']), Err(MetricsError::EmptyReference(None)));
    }

    #[test]
    fn corpus_aggregation() {
        let r10: Vec<u32> = (0..10).collect();
        let mut half = r10.clone();
        for x in half.iter_mut().take(5) {
            *x += 100;
        }
        let got = corpus_per(&[
            PerPair { id: "a", reference: &r10, hypothesis: &r10 },
            PerPair { id: "b", reference: &r10, hypothesis: &half },
        ])
        .unwrap();
        assert!((got.micro - 0.25).abs() < 1e-15 && (got.macro_avg - 0.25).abs() < 1e-15);

        let r30: Vec<u32> = (0..30).collect();
        let got = corpus_per(&[
            PerPair { id: "a", reference: &r30, hypothesis: &r30 },
            PerPair { id: "b", reference: &r10, hypothesis: &half },
        ])
        .unwrap();
        assert!((got.micro - 0.125).abs() < 1e-15);
        assert!((got.macro_avg - 0.25).abs() < 1e-15);

        let empty = corpus_per::<u32>(&[]).unwrap();
        assert!(empty.empty && empty.micro == 0.0 && empty.macro_avg == 0.0);

        let err = corpus_per(&[PerPair { id: "u7", reference: &[] as &[u32], hypothesis: &[1] }]);
        assert_eq!(err, Err(MetricsError::EmptyReference(Some("u7".into()))));
    }

    proptest! {
        #[test]
        fn decomposition_and_symmetry(a in proptest::collection::vec(0u8..4, 0..8),
                                      b in proptest::collection::vec(0u8..4, 0..8)) {
            let s = levenshtein_align(&a, &b);
            prop_assert_eq!(s.distance, s.substitutions + s.deletions + s.insertions);
            prop_assert_eq!(s.distance, levenshtein_align(&b, &a).distance);
            let kept = s.script.iter().filter(|op| !matches!(op, EditOp::Insert { .. })).count();
            prop_assert_eq!(kept, a.len());
        }

        #[test]
        fn triangle_inequality(a in proptest::collection::vec(0u8..3, 0..8),
                               b in proptest::collection::vec(0u8..3, 0..8),
                               c in proptest::collection::vec(0u8..3, 0..8)) {
            let d = |x: &[u8], y: &[u8]| levenshtein_align(x, y).distance;
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn per_invariant_under_relabeling(a in proptest::collection::vec(0u8..4, 1..8),
                                          b in proptest::collection::vec(0u8..4, 0..8)) {
            let relabel = |x: &[u8]| x.iter().map(|v| (3 - v) * 7 + 1).collect::<Vec<_>>();
            prop_assert_eq!(per(&a, &b).unwrap(), per(&relabel(&a), &relabel(&b)).unwrap());
        }
    }
}
