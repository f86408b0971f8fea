//! Parameter storage and the recurrent/linear building blocks shared by the
//! proxy TTS model and the probe.

use crate::numerics::{NumericsError, Prng, Result, Tape, Tensor, Var};

/// How a freshly created parameter is initialised.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Const(f64),
}

/// Ordered named tensors; layouts refer to entries by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn from_named(named: Vec<(String, Tensor)>) -> Self {
        let (names, tensors) = named.into_iter().unzip();
        Self { names, tensors }
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Insert every tensor as a differentiable leaf, in store order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Insert every tensor as a constant (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Source of parameter indices: either creates fresh tensors or resolves
/// names in an existing store (checking shapes).
pub enum Builder<'a> {
    Fresh { store: &'a mut ParamStore, rng: &'a mut Prng },
    Load { store: &'a ParamStore },
}

impl Builder<'_> {
    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<usize> {
        match self {
            Builder::Fresh { store, rng } => {
                let t = match init {
                    Init::Glorot { fan_in, fan_out } => {
                        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        Tensor::uniform(shape, bound, rng)
                    }
                    Init::Const(v) => Tensor::filled(shape, v),
                };
                store.names.push(name.to_string());
                store.tensors.push(t);
                Ok(store.tensors.len() - 1)
            }
            Builder::Load { store } => {
                let i = store.index_of(name).ok_or_else(|| NumericsError::ShapeMismatch {
                    op: "missing parameter",
                    left: shape.to_vec(),
                    right: vec![],
                })?;
                if store.tensors[i].shape() != shape {
                    return Err(NumericsError::ShapeMismatch {
                        op: "parameter shape",
                        left: shape.to_vec(),
                        right: store.tensors[i].shape().to_vec(),
                    });
                }
                Ok(i)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(b: &mut Builder<'_>, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Self {
            w: b.param(&format!("{name}.weight"), &[input, output], Init::Glorot { fan_in: input, fan_out: output })?,
            b: b.param(&format!("{name}.bias"), &[1, output], Init::Const(0.0))?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.w])?;
        tape.add(y, p[self.b])
    }
}

/// LSTM cell weights: gate order input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
    pub hidden: usize,
}

/// Recurrent state of one LSTM cell.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl Lstm {
    pub fn new(b: &mut Builder<'_>, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let wx = b.param(&format!("{name}.wx"), &[input, 4 * hidden], Init::Glorot { fan_in: input, fan_out: 4 * hidden })?;
        let wh = b.param(&format!("{name}.wh"), &[hidden, 4 * hidden], Init::Glorot { fan_in: hidden, fan_out: 4 * hidden })?;
        let bias = b.param(&format!("{name}.bias"), &[1, 4 * hidden], Init::Const(0.0))?;
        if let Builder::Fresh { store, .. } = b {
            // forget gate starts open
            let t = &mut store.tensors[bias];
            for v in &mut t.data_mut()[hidden..2 * hidden] {
                *v = 1.0;
            }
        }
        Ok(Self { wx, wh, b: bias, hidden })
    }

    pub fn zero_state(&self, tape: &mut Tape) -> LstmState {
        let z = tape.constant(Tensor::zeros(&[1, self.hidden]));
        LstmState { h: z, c: z }
    }

    /// Input projections `x·Wx + b` for a whole sequence `[T×In]`.
    pub fn project_inputs(&self, tape: &mut Tape, p: &[Var], xs: Var) -> Result<Var> {
        let g = tape.matmul(xs, p[self.wx])?;
        tape.add(g, p[self.b])
    }

    /// One step given precomputed input gates `[1×4H]` (already biased).
    pub fn step(&self, tape: &mut Tape, p: &[Var], gates_in: Var, state: LstmState) -> Result<LstmState> {
        let hh = tape.matmul(state.h, p[self.wh])?;
        let gates = tape.add(gates_in, hh)?;
        let h = self.hidden;
        let i = tape.slice(gates, 1, 0, h)?;
        let f = tape.slice(gates, 1, h, 2 * h)?;
        let g = tape.slice(gates, 1, 2 * h, 3 * h)?;
        let o = tape.slice(gates, 1, 3 * h, 4 * h)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    /// Run over `xs: [T×In]`, returning hidden states `[T×H]` in input order.
    pub fn sequence(&self, tape: &mut Tape, p: &[Var], xs: Var, reverse: bool) -> Result<Var> {
        let t_len = tape.shape(xs)[0];
        let proj = self.project_inputs(tape, p, xs)?;
        let mut state = self.zero_state(tape);
        let mut outs = vec![state.h; t_len];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..t_len).rev())
        } else {
            Box::new(0..t_len)
        };
        for t in order {
            let g = tape.slice(proj, 0, t, t + 1)?;
            state = self.step(tape, p, g, state)?;
            outs[t] = state.h;
        }
        tape.concat(&outs, 0)
    }
}
