use super::encoder::EncoderOutput;
use super::{Result, TtsError};
use crate::layers::{Builder, Init, Linear, Lstm, ParamStore};
use crate::numerics::{self, Prng, Tape, Tensor, Var};

/// Floor added to forward-attention weights before renormalising.
pub const FORWARD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    pub hidden: usize,
    pub attention_dim: usize,
    /// Frames predicted per decoder step.
    pub reduction: usize,
    pub frame_dim: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            attention_dim: 64,
            reduction: 1,
            frame_dim: 16,
        }
    }
}

/// Parameters of `e_n = vᵀ tanh(W s + V h_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdditiveAttention {
    pub query: usize,
    pub memory: usize,
    pub score: usize,
}

impl AdditiveAttention {
    fn new(b: &mut Builder<'_>, name: &str, state: usize, memory: usize, dim: usize) -> numerics::Result<Self> {
        Ok(Self {
            query: b.param(&format!("{name}.w"), &[state, dim], Init::Glorot { fan_in: state, fan_out: dim })?,
            memory: b.param(&format!("{name}.v"), &[memory, dim], Init::Glorot { fan_in: memory, fan_out: dim })?,
            score: b.param(&format!("{name}.score"), &[dim, 1], Init::Glorot { fan_in: dim, fan_out: 1 })?,
        })
    }

    /// `V h` for every memory row; computed once per utterance.
    pub fn keys(&self, tape: &mut Tape, p: &[Var], memory: Var) -> Result<Var> {
        Ok(tape.matmul(memory, p[self.memory])?)
    }

    /// Energies `[1×T]` for decoder state `s` `[1×H]`.
    pub fn energies(&self, tape: &mut Tape, p: &[Var], state: Var, keys: Var) -> Result<Var> {
        let q = tape.matmul(state, p[self.query])?;
        let pre = tape.add(keys, q)?;
        let act = tape.tanh(pre);
        let e = tape.matmul(act, p[self.score])?;
        Ok(tape.transpose(e)?)
    }
}

/// `α_t ∝ (α_{t−1}(n) + α_{t−1}(n−1)) · α̃_t(n) + ε` on a tape.
pub fn forward_attention_step(tape: &mut Tape, previous: Var, additive: Var) -> Result<Var> {
    let t_len = tape.shape(previous)[1];
    let shifted = if t_len == 1 {
        tape.constant(Tensor::zeros(&[1, 1]))
    } else {
        let zero = tape.constant(Tensor::zeros(&[1, 1]));
        let head = tape.slice(previous, 1, 0, t_len - 1)?;
        tape.concat(&[zero, head], 1)?
    };
    let reach = tape.add(previous, shifted)?;
    let u = tape.mul(reach, additive)?;
    let eps = tape.constant(Tensor::scalar(FORWARD_EPS));
    let u = tape.add(u, eps)?;
    let logu = tape.ln(u);
    Ok(tape.softmax_rows(logu)?)
}

/// Additive attention weights and context for one decoder state, outside
/// any training tape.
pub fn attend_additive(
    state: &Tensor,
    memory: &Tensor,
    query_w: &Tensor,
    memory_w: &Tensor,
    score_v: &Tensor,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let p = vec![
        tape.constant(query_w.clone()),
        tape.constant(memory_w.clone()),
        tape.constant(score_v.clone()),
    ];
    let att = AdditiveAttention { query: 0, memory: 1, score: 2 };
    let s = tape.constant(state.clone());
    let h = tape.constant(memory.clone());
    let keys = att.keys(&mut tape, &p, h)?;
    let e = att.energies(&mut tape, &p, s, keys)?;
    let alpha = tape.softmax_rows(e)?;
    let ctx = tape.matmul(alpha, h)?;
    Ok((tape.value(alpha).data().to_vec(), tape.value(ctx).data().to_vec()))
}

/// Forward-attention recursion on plain weight vectors.
pub fn attend_forward(previous: &[f64], additive: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(previous.len(), additive.len(), "attention lengths differ");
    let u: Vec<f64> = (0..previous.len())
        .map(|n| {
            let reach = previous[n] + if n > 0 { previous[n - 1] } else { 0.0 };
            reach * additive[n] + FORWARD_EPS
        })
        .collect();
    let total: f64 = u.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(TtsError::DegenerateDistribution);
    }
    Ok(u.into_iter().map(|x| x / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    cell: Lstm,
    attention: AdditiveAttention,
    sa_attention: Option<AdditiveAttention>,
    output: Linear,
}

/// Teacher-forced attention decoder predicting `reduction` frames per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    config: DecoderConfig,
    memory_dim: usize,
    store: ParamStore,
    layout: Layout,
}

/// Result of one teacher-forced pass on a tape.
#[derive(Debug, Clone)]
pub struct DecoderRun {
    /// `[S × r·F]` predicted frame groups.
    pub frames: Var,
    /// Forward-attention weights per decoder step.
    pub alignments: Vec<Vec<f64>>,
}

impl DecoderModel {
    fn layout(b: &mut Builder<'_>, c: &DecoderConfig, memory_dim: usize, with_sa: bool) -> numerics::Result<Layout> {
        let ctx_dim = if with_sa { 2 * memory_dim } else { memory_dim };
        let group = c.reduction * c.frame_dim;
        let cell = Lstm::new(b, "cell", group + ctx_dim, c.hidden)?;
        let attention = AdditiveAttention::new(b, "attention", c.hidden, memory_dim, c.attention_dim)?;
        let sa_attention = if with_sa {
            Some(AdditiveAttention::new(b, "sa_attention", c.hidden, memory_dim, c.attention_dim)?)
        } else {
            None
        };
        let output = Linear::new(b, "output", c.hidden + ctx_dim, group)?;
        Ok(Layout { cell, attention, sa_attention, output })
    }

    pub fn new(config: DecoderConfig, memory_dim: usize, with_self_attention: bool, rng: &mut Prng) -> Self {
        let mut store = ParamStore::default();
        let layout = Self::layout(&mut Builder::Fresh { store: &mut store, rng }, &config, memory_dim, with_self_attention)
            .expect("fresh parameters always resolve");
        Self { config, memory_dim, store, layout }
    }

    /// Rebuild from stored tensors; the reduction factor is not recoverable
    /// from shapes alone.
    pub fn from_store(store: ParamStore, reduction: usize) -> Result<Self> {
        let missing = |n: &str| TtsError::MalformedModel(format!("decoder tensor {n:?} missing"));
        let hidden = store.get("cell.wh").ok_or_else(|| missing("cell.wh"))?.rows();
        let att_v = store.get("attention.v").ok_or_else(|| missing("attention.v"))?;
        let (memory_dim, attention_dim) = (att_v.rows(), att_v.cols());
        let group = store.get("output.bias").ok_or_else(|| missing("output.bias"))?.cols();
        if reduction == 0 || group % reduction != 0 {
            return Err(TtsError::MalformedModel(format!("reduction {reduction} vs group {group}")));
        }
        let config = DecoderConfig {
            hidden,
            attention_dim,
            reduction,
            frame_dim: group / reduction,
        };
        let with_sa = store.get("sa_attention.v").is_some();
        let layout = Self::layout(&mut Builder::Load { store: &store }, &config, memory_dim, with_sa)?;
        Ok(Self { config, memory_dim, store, layout })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn attention(&self) -> AdditiveAttention {
        self.layout.attention
    }

    /// Pad frames `[T_a × F]` with zero rows to a multiple of the reduction
    /// factor and regroup as `[S × r·F]`.
    pub fn group_frames(&self, frames: &Tensor) -> Result<Tensor> {
        let (r, f) = (self.config.reduction, self.config.frame_dim);
        if frames.cols() != f {
            return Err(TtsError::FrameWidth { expected: f, found: frames.cols() });
        }
        let steps = frames.rows().div_ceil(r);
        let mut data = frames.data().to_vec();
        data.resize(steps * r * f, 0.0);
        Ok(Tensor::matrix(steps, r * f, data))
    }

    /// Teacher-forced decoding over grouped targets `[S × r·F]`.
    pub fn run(&self, tape: &mut Tape, p: &[Var], enc: &EncoderOutput, groups: &Tensor) -> Result<DecoderRun> {
        let l = &self.layout;
        let (steps, width) = (groups.rows(), groups.cols());
        let t_len = tape.shape(enc.states)[0];
        let mut prev = vec![0.0; steps * width];
        prev[width..].copy_from_slice(&groups.data()[..(steps - 1) * width]);
        let prev = tape.constant(Tensor::matrix(steps, width, prev));

        let keys = l.attention.keys(tape, p, enc.states)?;
        let sa_keys = match (l.sa_attention, enc.self_attention) {
            (Some(att), Some(mem)) => Some((att, att.keys(tape, p, mem)?, mem)),
            (None, None) => None,
            _ => return Err(TtsError::MalformedModel("self-attention mismatch between encoder and decoder".into())),
        };
        let ctx_dim = if sa_keys.is_some() { 2 * self.memory_dim } else { self.memory_dim };
        let mut first = Tensor::zeros(&[1, t_len]);
        first.data_mut()[0] = 1.0;
        let mut alpha = tape.constant(first);
        let mut ctx = tape.constant(Tensor::zeros(&[1, ctx_dim]));
        let mut state = l.cell.zero_state(tape);
        let mut outputs = Vec::with_capacity(steps);
        let mut alignments = Vec::with_capacity(steps);
        for t in 0..steps {
            let frame_in = tape.slice(prev, 0, t, t + 1)?;
            let x = tape.concat(&[frame_in, ctx], 1)?;
            let gates = l.cell.project_inputs(tape, p, x)?;
            state = l.cell.step(tape, p, gates, state)?;
            let e = l.attention.energies(tape, p, state.h, keys)?;
            let additive = tape.softmax_rows(e)?;
            alpha = forward_attention_step(tape, alpha, additive)?;
            alignments.push(tape.value(alpha).data().to_vec());
            ctx = tape.matmul(alpha, enc.states)?;
            if let Some((att, k2, mem)) = sa_keys {
                let e2 = att.energies(tape, p, state.h, k2)?;
                let beta = tape.softmax_rows(e2)?;
                let ctx2 = tape.matmul(beta, mem)?;
                ctx = tape.concat(&[ctx, ctx2], 1)?;
            }
            let features = tape.concat(&[state.h, ctx], 1)?;
            outputs.push(l.output.forward(tape, p, features)?);
        }
        let frames = tape.concat(&outputs, 0)?;
        Ok(DecoderRun { frames, alignments })
    }
}

/// Fraction of decoder steps whose attention argmax does not move backwards.
pub fn monotonic_fraction(alignments: &[Vec<f64>]) -> f64 {
    if alignments.len() < 2 {
        return 1.0;
    }
    let argmax = |row: &Vec<f64>| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    };
    let peaks: Vec<usize> = alignments.iter().map(argmax).collect();
    let ok = peaks.windows(2).filter(|w| w[1] >= w[0]).count();
    ok as f64 / (peaks.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, NumericsError};

    fn numeric(e: TtsError) -> NumericsError {
        match e {
            TtsError::Numerics(e) => e,
            other => panic!("{other}"),
        }
    }

    #[test]
    fn forward_recursion_examples() {
        let a = attend_forward(&[1.0, 0.0, 0.0], &[1.0 / 3.0; 3]).unwrap();
        assert!((a[0] - 0.5).abs() < 1e-11 && (a[1] - 0.5).abs() < 1e-11 && a[2] < 1e-11);
        let b = attend_forward(&[0.2, 0.8, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!((b[2] - 1.0).abs() < 1e-10);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(attend_forward(&[f64::NAN], &[1.0]), Err(TtsError::DegenerateDistribution)));
    }

    #[test]
    fn tape_forward_step_matches_plain() {
        let prev = [0.1, 0.6, 0.3, 0.0];
        let add = [0.4, 0.1, 0.2, 0.3];
        let mut tape = Tape::new();
        let pv = tape.constant(Tensor::matrix(1, 4, prev.to_vec()));
        let av = tape.constant(Tensor::matrix(1, 4, add.to_vec()));
        let out = forward_attention_step(&mut tape, pv, av).unwrap();
        let plain = attend_forward(&prev, &add).unwrap();
        for (x, y) in tape.value(out).data().iter().zip(&plain) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn additive_attention_properties() {
        let mut rng = Prng::new(8);
        let state = Tensor::randn(&[1, 3], 1.0, &mut rng);
        let memory = Tensor::randn(&[5, 4], 1.0, &mut rng);
        let w = Tensor::randn(&[3, 2], 1.0, &mut rng);
        let v = Tensor::randn(&[4, 2], 1.0, &mut rng);
        let s = Tensor::randn(&[2, 1], 1.0, &mut rng);
        let (alpha, ctx) = attend_additive(&state, &memory, &w, &v, &s).unwrap();
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(alpha.iter().all(|&a| a >= 0.0));
        assert_eq!(ctx.len(), 4);
        // identical memory rows → equal energies → uniform weights
        let same = Tensor::matrix(3, 4, [0.3, -0.1, 0.5, 0.2].repeat(3));
        let (alpha, _) = attend_additive(&state, &same, &w, &v, &s).unwrap();
        assert!(alpha.iter().all(|a| (a - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn attention_gradient() {
        let mut rng = Prng::new(12);
        let theta = vec![
            Tensor::randn(&[1, 3], 1.0, &mut rng),
            Tensor::randn(&[5, 4], 1.0, &mut rng),
            Tensor::randn(&[3, 2], 1.0, &mut rng),
            Tensor::randn(&[4, 2], 1.0, &mut rng),
            Tensor::randn(&[2, 1], 1.0, &mut rng),
            Tensor::matrix(1, 5, vec![0.1, 0.4, 0.3, 0.15, 0.05]),
        ];
        let err = grad_check(
            |t, v| {
                let att = AdditiveAttention { query: 2, memory: 3, score: 4 };
                let keys = att.keys(t, v, v[1]).map_err(numeric)?;
                let e = att.energies(t, v, v[0], keys).map_err(numeric)?;
                let additive = t.softmax_rows(e)?;
                let alpha = forward_attention_step(t, v[5], additive).map_err(numeric)?;
                let ctx = t.matmul(alpha, v[1])?;
                let sq = t.mul(ctx, ctx)?;
                Ok(t.sum(sq))
            },
            &theta,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "{err:e}");
    }

    #[test]
    fn monotonic_measure() {
        let rows = vec![vec![1.0, 0.0], vec![0.2, 0.8], vec![0.9, 0.1], vec![0.0, 1.0]];
        assert!((monotonic_fraction(&rows) - 2.0 / 3.0).abs() < 1e-15);
    }
}
