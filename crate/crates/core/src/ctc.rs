//! Connectionist temporal classification: log-domain forward–backward loss,
//! its gradient with respect to pre-softmax logits, a brute-force path
//! enumerator used as an oracle, and greedy decoding.
//!
//! The blank label is always the last column of the log-probability matrix.

use crate::numerics::Tensor;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtcError {
    #[error("target needs {required} frames but only {frames} are available")]
    TargetTooLong { frames: usize, required: usize },
    #[error("brute force over {paths} paths exceeds the 1e6 limit")]
    ProblemTooLarge { paths: f64 },
    #[error("invalid CTC problem: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CtcError>;

/// Log-probabilities `[T × (V+1)]` (blank last) paired with a target.
#[derive(Debug, Clone, Copy)]
pub struct CtcProblem<'a> {
    log_probs: &'a Tensor,
    target: &'a [usize],
}

impl<'a> CtcProblem<'a> {
    pub fn new(log_probs: &'a Tensor, target: &'a [usize]) -> Result<Self> {
        if log_probs.shape().len() != 2 || log_probs.cols() < 1 {
            return Err(CtcError::Invalid(format!("log-prob shape {:?}", log_probs.shape())));
        }
        let blank = log_probs.cols() - 1;
        if let Some(&bad) = target.iter().find(|&&y| y >= blank) {
            return Err(CtcError::Invalid(format!("target id {bad} >= blank id {blank}")));
        }
        for t in 0..log_probs.rows() {
            let s: f64 = log_probs.row(t).iter().map(|v| v.exp()).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(CtcError::Invalid(format!("row {t} sums to {s}")));
            }
        }
        Ok(Self { log_probs, target })
    }

    pub fn frames(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn blank(&self) -> usize {
        self.log_probs.cols() - 1
    }

    pub fn target(&self) -> &[usize] {
        self.target
    }

    fn lp(&self, t: usize, k: usize) -> f64 {
        self.log_probs.get2(t, k)
    }

    fn check_length(&self) -> Result<()> {
        let required = min_frames(self.target);
        if self.frames() < required {
            return Err(CtcError::TargetTooLong {
                frames: self.frames(),
                required,
            });
        }
        Ok(())
    }

    /// `[∅, y₁, ∅, y₂, …, ∅]`.
    pub fn extended_target(&self) -> Vec<usize> {
        extended_target(self.target, self.blank())
    }
}

/// Frames needed to emit `target`: its length plus one separating blank per
/// adjacent repeat.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn extended_target(target: &[usize], blank: usize) -> Vec<usize> {
    let mut z = Vec::with_capacity(2 * target.len() + 1);
    z.push(blank);
    for &y in target {
        z.push(y);
        z.push(blank);
    }
    z
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Row-major `[T × S]` log-forward variables, emission at t included.
fn forward_table(p: &CtcProblem<'_>, z: &[usize]) -> Vec<f64> {
    let (t_len, s_len) = (p.frames(), z.len());
    let mut alpha = vec![f64::NEG_INFINITY; t_len * s_len];
    alpha[0] = p.lp(0, z[0]);
    if s_len > 1 {
        alpha[1] = p.lp(0, z[1]);
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if s >= 2 && z[s] != z[s - 2] {
                acc = log_add(acc, prev[s - 2]);
            }
            cur[s] = acc + p.lp(t, z[s]);
        }
    }
    alpha
}

/// Row-major `[T × S]` log-backward variables, emission at t excluded.
fn backward_table(p: &CtcProblem<'_>, z: &[usize]) -> Vec<f64> {
    let (t_len, s_len) = (p.frames(), z.len());
    let mut beta = vec![f64::NEG_INFINITY; t_len * s_len];
    let last = (t_len - 1) * s_len;
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let nxt = (t + 1) * s_len;
            let mut acc = beta[nxt + s] + p.lp(t + 1, z[s]);
            if s + 1 < s_len {
                acc = log_add(acc, beta[nxt + s + 1] + p.lp(t + 1, z[s + 1]));
            }
            if s + 2 < s_len && z[s + 2] != z[s] {
                acc = log_add(acc, beta[nxt + s + 2] + p.lp(t + 1, z[s + 2]));
            }
            beta[t * s_len + s] = acc;
        }
    }
    beta
}

fn nll_from_alpha(alpha: &[f64], t_len: usize, s_len: usize) -> f64 {
    let last = (t_len - 1) * s_len;
    let mut ll = alpha[last + s_len - 1];
    if s_len > 1 {
        ll = log_add(ll, alpha[last + s_len - 2]);
    }
    -ll
}

/// Negative log-likelihood of the target under all monotonic alignments.
pub fn ctc_forward(p: &CtcProblem<'_>) -> Result<f64> {
    p.check_length()?;
    if p.frames() == 0 {
        return Ok(0.0);
    }
    let z = p.extended_target();
    let alpha = forward_table(p, &z);
    Ok(nll_from_alpha(&alpha, p.frames(), z.len()))
}

/// NLL and its gradient with respect to the logits whose row-wise
/// log-softmax produced the problem's log-probabilities.
pub fn ctc_loss_and_grad(p: &CtcProblem<'_>) -> Result<(f64, Tensor)> {
    p.check_length()?;
    let (t_len, width) = (p.frames(), p.log_probs.cols());
    if t_len == 0 {
        return Ok((0.0, Tensor::zeros(&[0, width])));
    }
    let z = p.extended_target();
    let s_len = z.len();
    let alpha = forward_table(p, &z);
    let beta = backward_table(p, &z);
    let nll = nll_from_alpha(&alpha, t_len, s_len);
    let mut grad = Tensor::zeros(&[t_len, width]);
    let g = grad.data_mut();
    let mut occupancy = vec![f64::NEG_INFINITY; width];
    for t in 0..t_len {
        occupancy.fill(f64::NEG_INFINITY);
        for s in 0..s_len {
            let v = alpha[t * s_len + s] + beta[t * s_len + s];
            occupancy[z[s]] = log_add(occupancy[z[s]], v);
        }
        for k in 0..width {
            // the per-frame total over s equals the sequence likelihood
            let posterior = (occupancy[k] + nll).exp();
            g[t * width + k] = p.lp(t, k).exp() - posterior;
        }
    }
    Ok((nll, grad))
}

pub fn ctc_grad(p: &CtcProblem<'_>) -> Result<Tensor> {
    ctc_loss_and_grad(p).map(|(_, g)| g)
}

/// Remove consecutive duplicates, then blanks.
pub fn collapse(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in labels {
        if Some(l) != prev && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Likelihood by enumerating every frame-label path.
pub fn ctc_brute_force(p: &CtcProblem<'_>) -> Result<f64> {
    let width = p.log_probs.cols();
    let t_len = p.frames();
    let paths = (width as f64).powi(t_len as i32);
    if paths > 1e6 {
        return Err(CtcError::ProblemTooLarge { paths });
    }
    let mut path = vec![0usize; t_len];
    let mut total = 0.0;
    loop {
        if collapse(&path, p.blank()) == p.target {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &k)| p.lp(t, k).exp())
                .product::<f64>();
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == t_len {
                return Ok(total);
            }
            path[pos] += 1;
            if path[pos] < width {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

/// Per-frame argmax (ties → lowest id) followed by [`collapse`].
pub fn greedy_decode(log_probs: &Tensor) -> Vec<usize> {
    let blank = log_probs.cols() - 1;
    let best: Vec<usize> = (0..log_probs.rows())
        .map(|t| {
            let row = log_probs.row(t);
            let mut arg = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = k;
                }
            }
            arg
        })
        .collect();
    collapse(&best, blank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check_fn, log_softmax_rows, Prng};

    const A: usize = 0;
    const B: usize = 1;
    const BLANK: usize = 2;

    fn probs_to_logs(rows: &[Vec<f64>]) -> Tensor {
        let t = Tensor::from_rows(rows);
        let d = t.data().iter().map(|p| p.ln()).collect();
        Tensor::new(t.shape().to_vec(), d).unwrap()
    }

    fn random_logits(t: usize, width: usize, rng: &mut Prng) -> Tensor {
        Tensor::randn(&[t, width], 1.5, rng)
    }

    #[test]
    fn single_frame_single_label() {
        let lp = probs_to_logs(&[vec![0.6, 0.3, 0.1]]);
        let p = CtcProblem::new(&lp, &[A]).unwrap();
        assert!((ctc_forward(&p).unwrap() + 0.6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_frames_enumerated() {
        let r1 = vec![0.5, 0.2, 0.3];
        let r2 = vec![0.1, 0.6, 0.3];
        let lp = probs_to_logs(&[r1.clone(), r2.clone()]);
        let p = CtcProblem::new(&lp, &[A]).unwrap();
        let expected = r1[A] * r2[A] + r1[BLANK] * r2[A] + r1[A] * r2[BLANK];
        assert!(((-ctc_forward(&p).unwrap()).exp() - expected).abs() < 1e-15);
        assert!((ctc_brute_force(&p).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn too_long_target() {
        let lp = probs_to_logs(&[vec![0.6, 0.3, 0.1]]);
        let p = CtcProblem::new(&lp, &[A, B]).unwrap();
        assert_eq!(ctc_forward(&p), Err(CtcError::TargetTooLong { frames: 1, required: 2 }));
        let lp2 = probs_to_logs(&[vec![0.6, 0.3, 0.1], vec![0.6, 0.3, 0.1]]);
        let rep = CtcProblem::new(&lp2, &[A, A]).unwrap();
        assert!(matches!(ctc_forward(&rep), Err(CtcError::TargetTooLong { required: 3, .. })));
    }

    #[test]
    fn invalid_problems_rejected() {
        let lp = probs_to_logs(&[vec![0.6, 0.3, 0.2]]);
        assert!(CtcProblem::new(&lp, &[A]).is_err());
        let ok = probs_to_logs(&[vec![0.6, 0.3, 0.1]]);
        assert!(CtcProblem::new(&ok, &[BLANK]).is_err());
    }

    #[test]
    fn single_frame_grad_is_cross_entropy() {
        let logits = Tensor::matrix(1, 3, vec![0.2, -0.4, 1.1]);
        let lp = log_softmax_rows(&logits);
        let p = CtcProblem::new(&lp, &[A]).unwrap();
        let g = ctc_grad(&p).unwrap();
        for k in 0..3 {
            let expected = lp.get2(0, k).exp() - if k == A { 1.0 } else { 0.0 };
            assert!((g.get2(0, k) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn brute_force_limits() {
        let mut rng = Prng::new(1);
        // 10^6 paths is the largest admissible problem, 10^7 is rejected
        let lp = log_softmax_rows(&random_logits(7, 10, &mut rng));
        let p = CtcProblem::new(&lp, &[1]).unwrap();
        assert!(matches!(ctc_brute_force(&p), Err(CtcError::ProblemTooLarge { .. })));
        let lp = log_softmax_rows(&random_logits(2, 3, &mut rng));
        let p = CtcProblem::new(&lp, &[A, B, A]).unwrap();
        assert_eq!(ctc_brute_force(&p).unwrap(), 0.0);
    }

    #[test]
    fn oracle_equivalence_random() {
        let mut rng = Prng::new(2024);
        for _ in 0..200 {
            let vocab = 1 + rng.below(3);
            let t = 1 + rng.below(6);
            let l = rng.below(4);
            let target: Vec<usize> = (0..l).map(|_| rng.below(vocab)).collect();
            let lp = log_softmax_rows(&random_logits(t, vocab + 1, &mut rng));
            let p = CtcProblem::new(&lp, &target).unwrap();
            match ctc_forward(&p) {
                Ok(nll) => {
                    let brute = ctc_brute_force(&p).unwrap();
                    assert!(((-nll).exp() - brute).abs() <= 1e-12, "{target:?} T={t}");
                }
                Err(CtcError::TargetTooLong { .. }) => assert!(t < min_frames(&target)),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Prng::new(77);
        let mut checked = 0;
        while checked < 100 {
            let vocab = 1 + rng.below(3);
            let t = 1 + rng.below(5);
            let l = 1 + rng.below(2);
            let target: Vec<usize> = (0..l).map(|_| rng.below(vocab)).collect();
            if t < min_frames(&target) {
                continue;
            }
            let logits = random_logits(t, vocab + 1, &mut rng);
            let lp = log_softmax_rows(&logits);
            let g = ctc_grad(&CtcProblem::new(&lp, &target).unwrap()).unwrap();
            let f = |x: &[Tensor]| {
                let lp = log_softmax_rows(&x[0]);
                ctc_forward(&CtcProblem::new(&lp, &target).unwrap()).unwrap()
            };
            let err = grad_check_fn(f, &[g], &[logits], 1e-6).unwrap();
            assert!(err <= 1e-6, "relative error {err:e}");
            checked += 1;
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let mut rng = Prng::new(5);
        let lp = log_softmax_rows(&random_logits(5, 4, &mut rng));
        let g = ctc_grad(&CtcProblem::new(&lp, &[0, 2, 2]).unwrap()).unwrap();
        for t in 0..5 {
            assert!(g.row(t).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn certain_path_has_zero_loss() {
        // path a a ∅ b spells [a, b]
        let path = [A, A, BLANK, B];
        let rows: Vec<Vec<f64>> = path
            .iter()
            .map(|&k| (0..3).map(|j| if j == k { 0.0 } else { f64::NEG_INFINITY }).collect())
            .collect();
        let lp = Tensor::from_rows(&rows);
        let p = CtcProblem::new(&lp, &[A, B]).unwrap();
        assert_eq!(ctc_forward(&p).unwrap(), 0.0);
    }

    #[test]
    fn collapse_rule() {
        let n = 9;
        assert_eq!(collapse(&[A, A, n, A, B, B], n), vec![A, A, B]);
        assert_eq!(collapse(&[n, n, n], n), Vec::<usize>::new());
        assert_eq!(collapse(&[A, n, A], n), vec![A, A]);
        let clean = [0, 1, 0, 2];
        assert_eq!(collapse(&collapse(&clean, n), n), clean.to_vec());
    }

    #[test]
    fn greedy_decoding() {
        let rows = vec![vec![0.9, 0.05, 0.05], vec![0.05, 0.05, 0.9], vec![0.05, 0.9, 0.05]];
        assert_eq!(greedy_decode(&probs_to_logs(&rows)), vec![A, B]);
        let uniform = probs_to_logs(&vec![vec![1.0 / 3.0; 3]; 4]);
        assert_eq!(greedy_decode(&uniform), vec![0]);
    }
}
