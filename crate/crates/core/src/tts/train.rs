use std::collections::BTreeMap;

use super::{DecoderConfig, DecoderModel, EncoderConfig, EncoderModel, Result, TtsError};
use crate::checkpoint;
use crate::corpus::{Corpus, GraphemeVocab, Split, SILENT_LABEL};
use crate::numerics::{AdamConfig, AdamState, Prng, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            epochs: 10,
            lr: 1e-3,
            clip_norm: Some(1.0),
        }
    }
}

/// Encoder and decoder trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
}

const ENC: &str = "enc.";
const DEC: &str = "dec.";
const META_REDUCTION: &str = "meta.reduction";

impl ProxyModel {
    pub fn new(vocab_size: usize, config: &ProxyConfig, rng: &mut Prng) -> Self {
        let encoder = EncoderModel::new(vocab_size, config.encoder, rng);
        let decoder = DecoderModel::new(
            config.decoder,
            encoder.output_dim(),
            config.encoder.self_attention,
            rng,
        );
        Self { encoder, decoder }
    }

    /// Checkpoint tensors: prefixed encoder and decoder parameters plus the
    /// reduction factor.
    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        let enc = self.encoder.store().named().map(|(n, t)| (format!("{ENC}{n}"), t.clone()));
        let dec = self.decoder.store().named().map(|(n, t)| (format!("{DEC}{n}"), t.clone()));
        enc.chain(dec)
            .chain(std::iter::once((
                META_REDUCTION.to_string(),
                Tensor::scalar(self.decoder.config().reduction as f64),
            )))
            .collect()
    }

    pub fn from_named(named: &[(String, Tensor)]) -> Result<Self> {
        let reduction = named
            .iter()
            .find(|(n, _)| n == META_REDUCTION)
            .map(|(_, t)| t.item())
            .ok_or_else(|| TtsError::MalformedModel(format!("{META_REDUCTION} missing")))?;
        if !(reduction >= 1.0 && reduction.fract() == 0.0) {
            return Err(TtsError::MalformedModel(format!("reduction {reduction}")));
        }
        let encoder = EncoderModel::from_store(checkpoint::with_prefix(named, ENC))?;
        let decoder = DecoderModel::from_store(checkpoint::with_prefix(named, DEC), reduction as usize)?;
        Ok(Self { encoder, decoder })
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.store().all_finite() && self.decoder.store().all_finite()
    }
}

/// What the proxy trainer sees of an utterance: grapheme ids and frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub id: String,
    pub graphemes: Vec<usize>,
    pub frames: Tensor,
}

/// Pair each utterance of `split` with its acoustic target. Only ids and
/// graphemes are read from the corpus.
pub fn training_examples(
    corpus: &Corpus,
    split: Split,
    vocab: &GraphemeVocab,
    targets: &BTreeMap<String, Tensor>,
) -> Result<Vec<TrainingExample>> {
    corpus
        .split(split)
        .into_iter()
        .map(|u| {
            let graphemes = u
                .graphemes
                .iter()
                .map(|&c| vocab.id(c).ok_or(TtsError::UnknownGrapheme(c)))
                .collect::<Result<Vec<_>>>()?;
            let frames = targets.get(&u.id).ok_or_else(|| TtsError::MissingTarget(u.id.clone()))?.clone();
            Ok(TrainingExample {
                id: u.id.clone(),
                graphemes,
                frames,
            })
        })
        .collect()
}

/// Mean squared frame error of one teacher-forced pass; `enc_p` and `dec_p`
/// are the two stores bound on `tape`.
pub fn proxy_loss(
    model: &ProxyModel,
    tape: &mut Tape,
    enc_p: &[Var],
    dec_p: &[Var],
    example: &TrainingExample,
) -> Result<(Var, Vec<Vec<f64>>)> {
    let groups = model.decoder.group_frames(&example.frames)?;
    let enc = model.encoder.forward(tape, enc_p, &example.graphemes)?;
    let run = model.decoder.run(tape, dec_p, &enc, &groups)?;
    let target = tape.constant(groups);
    let se = tape.squared_error(run.frames, target)?;
    let n = tape.value(target).len() as f64;
    Ok((tape.scale(se, 1.0 / n), run.alignments))
}

#[derive(Debug, Clone)]
pub struct TrainedProxy {
    pub model: ProxyModel,
    /// Mean training loss per epoch.
    pub curve: Vec<f64>,
}

/// Train encoder and decoder with Adam, one utterance per step, visiting
/// the examples in a fresh seeded order each epoch.
pub fn train_proxy(examples: &[TrainingExample], vocab_size: usize, config: &ProxyConfig, seed: u64) -> Result<TrainedProxy> {
    if examples.is_empty() {
        return Err(TtsError::EmptyTrainSplit);
    }
    let rng = Prng::new(seed);
    let mut model = ProxyModel::new(vocab_size, config, &mut rng.fork(1));
    let mut order_rng = rng.fork(2);
    let adam_config = AdamConfig {
        clip_norm: config.clip_norm,
        ..AdamConfig::with_lr(config.lr)
    };
    let mut adam = AdamState::new(
        adam_config,
        model.encoder.store().tensors().iter().chain(model.decoder.store().tensors()),
    );
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let mut tape = Tape::new();
            let enc_p = model.encoder.store().bind(&mut tape);
            let dec_p = model.decoder.store().bind(&mut tape);
            let (loss, _) = proxy_loss(&model, &mut tape, &enc_p, &dec_p, &examples[i])?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TtsError::NonFiniteLoss { step: adam.step_count() });
            }
            total += value;
            let grads = tape.backward(loss);
            let grads: Vec<Tensor> = enc_p.iter().chain(&dec_p).map(|&v| grads.get_or_zeros(v)).collect();
            let ProxyModel { encoder, decoder } = &mut model;
            let mut params = encoder.store_mut().tensors_mut();
            params.extend(decoder.store_mut().tensors_mut());
            adam.step(&mut params, &grads)?;
        }
        curve.push(total / examples.len() as f64);
    }
    Ok(TrainedProxy { model, curve })
}

/// Teacher-forced forward-attention weights, one row per decoder step.
pub fn alignments(model: &ProxyModel, example: &TrainingExample) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let enc_p = model.encoder.store().bind_frozen(&mut tape);
    let dec_p = model.decoder.store().bind_frozen(&mut tape);
    Ok(proxy_loss(model, &mut tape, &enc_p, &dec_p, example)?.1)
}

/// One contextual embedding with its provenance and gold label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub vector: Vec<f64>,
    pub utterance_id: String,
    pub position: usize,
    pub grapheme: char,
    /// First aligned phoneme, or the silent label.
    pub label: String,
}

/// Encoder outputs for every grapheme of every utterance in `split`.
pub fn extract_embeddings(
    encoder: &EncoderModel,
    corpus: &Corpus,
    split: Split,
    vocab: &GraphemeVocab,
) -> Result<Vec<EmbeddingRecord>> {
    let mut records = Vec::new();
    for u in corpus.split(split) {
        let ids = u
            .graphemes
            .iter()
            .map(|&c| vocab.id(c).ok_or(TtsError::UnknownGrapheme(c)))
            .collect::<Result<Vec<_>>>()?;
        let states = encoder.encode(&ids)?;
        for (pos, &g) in u.graphemes.iter().enumerate() {
            records.push(EmbeddingRecord {
                vector: states.row(pos).to_vec(),
                utterance_id: u.id.clone(),
                position: pos,
                grapheme: g,
                label: u.label_at(pos).unwrap_or(SILENT_LABEL).to_string(),
            });
        }
    }
    Ok(records)
}
