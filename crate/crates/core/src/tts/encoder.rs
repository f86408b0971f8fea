use super::{Result, TtsError};
use crate::layers::{Builder, Init, Linear, Lstm, ParamStore};
use crate::numerics::{Prng, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    /// Convolution widths 1..=bank_width.
    pub bank_width: usize,
    pub bank_channels: usize,
    /// Units per recurrent direction; output width is twice this.
    pub hidden: usize,
    pub self_attention: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            bank_width: 8,
            bank_channels: 32,
            hidden: 64,
            self_attention: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embedding: usize,
    bank: Vec<(usize, usize)>,
    projection: Linear,
    highway: Vec<(Linear, Linear)>,
    forward: Lstm,
    backward: Lstm,
    self_attention: Option<[usize; 3]>,
}

impl Layout {
    fn build(b: &mut Builder<'_>, vocab_size: usize, c: &EncoderConfig) -> crate::numerics::Result<Self> {
        let e = c.embed_dim;
        let embedding = b.param("embedding", &[vocab_size, e], Init::Glorot { fan_in: 1, fan_out: e })?;
        let mut bank = Vec::with_capacity(c.bank_width);
        for w in 1..=c.bank_width {
            let weight = b.param(
                &format!("bank.{w}.weight"),
                &[w, e, c.bank_channels],
                Init::Glorot { fan_in: w * e, fan_out: c.bank_channels },
            )?;
            let bias = b.param(&format!("bank.{w}.bias"), &[1, c.bank_channels], Init::Const(0.0))?;
            bank.push((weight, bias));
        }
        let projection = Linear::new(b, "projection", c.bank_width * c.bank_channels, e)?;
        let mut highway = Vec::new();
        for k in 0..2 {
            let h = Linear::new(b, &format!("highway.{k}.h"), e, e)?;
            let t = Linear::new(b, &format!("highway.{k}.t"), e, e)?;
            if let Builder::Fresh { store, .. } = b {
                // carry-biased gates at initialisation
                store.tensors_mut()[t.b].data_mut().fill(-1.0);
            }
            highway.push((h, t));
        }
        let forward = Lstm::new(b, "lstm_fwd", e, c.hidden)?;
        let backward = Lstm::new(b, "lstm_bwd", e, c.hidden)?;
        let d = 2 * c.hidden;
        let self_attention = if c.self_attention {
            let g = Init::Glorot { fan_in: d, fan_out: d };
            Some([
                b.param("sa.query", &[d, d], g)?,
                b.param("sa.key", &[d, d], g)?,
                b.param("sa.value", &[d, d], g)?,
            ])
        } else {
            None
        };
        Ok(Self {
            embedding,
            bank,
            projection,
            highway,
            forward,
            backward,
            self_attention,
        })
    }
}

/// Contextual grapheme encoder: embedding, convolution bank, window max,
/// projection with residual, two highway layers, bidirectional LSTM, and an
/// optional self-attention block on top.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    vocab_size: usize,
    store: ParamStore,
    layout: Layout,
}

/// Encoder outputs on a tape.
#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    /// Bidirectional recurrence output `[T×2H]`; the contextual embeddings.
    pub states: Var,
    pub self_attention: Option<Var>,
}

impl EncoderModel {
    pub fn new(vocab_size: usize, config: EncoderConfig, rng: &mut Prng) -> Self {
        let mut store = ParamStore::default();
        let layout = Layout::build(&mut Builder::Fresh { store: &mut store, rng }, vocab_size, &config)
            .expect("fresh parameters always resolve");
        Self {
            config,
            vocab_size,
            store,
            layout,
        }
    }

    /// Rebuild from stored tensors, inferring the configuration from shapes.
    pub fn from_store(store: ParamStore) -> Result<Self> {
        let missing = |n: &str| TtsError::MalformedModel(format!("encoder tensor {n:?} missing"));
        let emb = store.get("embedding").ok_or_else(|| missing("embedding"))?;
        let (vocab_size, embed_dim) = (emb.rows(), emb.cols());
        let mut bank_width = 0;
        while store.get(&format!("bank.{}.weight", bank_width + 1)).is_some() {
            bank_width += 1;
        }
        let bank_channels = store
            .get("bank.1.weight")
            .ok_or_else(|| missing("bank.1.weight"))?
            .shape()[2];
        let hidden = store.get("lstm_fwd.wh").ok_or_else(|| missing("lstm_fwd.wh"))?.rows();
        let config = EncoderConfig {
            embed_dim,
            bank_width,
            bank_channels,
            hidden,
            self_attention: store.get("sa.query").is_some(),
        };
        let layout = Layout::build(&mut Builder::Load { store: &store }, vocab_size, &config)?;
        Ok(Self {
            config,
            vocab_size,
            store,
            layout,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn output_dim(&self) -> usize {
        2 * self.config.hidden
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.vocab_size) {
            Some(&id) => Err(TtsError::IndexOutOfVocabulary { id, size: self.vocab_size }),
            None => Ok(()),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], ids: &[usize]) -> Result<EncoderOutput> {
        self.check_ids(ids)?;
        if ids.is_empty() {
            return Err(TtsError::EmptyInput);
        }
        let l = &self.layout;
        let x = tape.gather(p[l.embedding], ids)?;
        let mut bank_out = Vec::with_capacity(l.bank.len());
        for &(w, b) in &l.bank {
            let conv = tape.conv1d(x, p[w])?;
            let conv = tape.add(conv, p[b])?;
            bank_out.push(tape.tanh(conv));
        }
        let bank = tape.concat(&bank_out, 1)?;
        let pooled = tape.window_max(bank, 2)?;
        let proj = l.projection.forward(tape, p, pooled)?;
        let mut y = tape.add(proj, x)?;
        for (hl, tl) in &l.highway {
            let h = hl.forward(tape, p, y)?;
            let h = tape.tanh(h);
            let gate = tl.forward(tape, p, y)?;
            let gate = tape.sigmoid(gate);
            // y + T ⊙ (H − y)
            let delta = tape.sub(h, y)?;
            let delta = tape.mul(gate, delta)?;
            y = tape.add(y, delta)?;
        }
        let fwd = l.forward.sequence(tape, p, y, false)?;
        let bwd = l.backward.sequence(tape, p, y, true)?;
        let states = tape.concat(&[fwd, bwd], 1)?;
        let self_attention = match l.self_attention {
            Some([q, k, v]) => {
                let q = tape.matmul(states, p[q])?;
                let k = tape.matmul(states, p[k])?;
                let v = tape.matmul(states, p[v])?;
                let kt = tape.transpose(k)?;
                let scores = tape.matmul(q, kt)?;
                let scores = tape.scale(scores, 1.0 / (self.output_dim() as f64).sqrt());
                let weights = tape.softmax_rows(scores)?;
                Some(tape.matmul(weights, v)?)
            }
            None => None,
        };
        Ok(EncoderOutput { states, self_attention })
    }

    /// Contextual embeddings `[T × 2H]` for one grapheme id sequence.
    pub fn encode(&self, ids: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &p, ids)?;
        Ok(tape.value(out.states).clone())
    }

    /// Embeddings plus the self-attention output when that block is enabled.
    pub fn encode_full(&self, ids: &[usize]) -> Result<(Tensor, Option<Tensor>)> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &p, ids)?;
        Ok((
            tape.value(out.states).clone(),
            out.self_attention.map(|v| tape.value(v).clone()),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sa: bool) -> EncoderModel {
        let cfg = EncoderConfig {
            embed_dim: 6,
            bank_width: 3,
            bank_channels: 4,
            hidden: 5,
            self_attention: sa,
        };
        EncoderModel::new(7, cfg, &mut Prng::new(3))
    }

    #[test]
    fn shapes() {
        let enc = small(true);
        assert_eq!(enc.encode(&[3]).unwrap().shape(), &[1, 10]);
        let (h, sa) = enc.encode_full(&[1, 2, 3, 4]).unwrap();
        assert_eq!(h.shape(), &[4, 10]);
        assert_eq!(sa.unwrap().shape(), &[4, 10]);
    }

    #[test]
    fn out_of_vocabulary() {
        assert!(matches!(
            small(false).encode(&[1, 7]),
            Err(TtsError::IndexOutOfVocabulary { id: 7, size: 7 })
        ));
    }

    #[test]
    fn deterministic_and_contextual() {
        let enc = small(false);
        let a = enc.encode(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(a, enc.encode(&[1, 2, 3, 4, 5]).unwrap());
        // swap the first two graphemes; position 2 keeps its grapheme but its
        // context changed
        let b = enc.encode(&[2, 1, 3, 4, 5]).unwrap();
        assert_ne!(a.row(2), b.row(2));
    }

    #[test]
    fn reload_from_store() {
        let enc = small(true);
        let back = EncoderModel::from_store(enc.store().clone()).unwrap();
        assert_eq!(back, enc);
    }
}
