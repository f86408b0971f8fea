//! Shallow CTC phoneme probe over one-hot graphemes or contextual
//! embeddings, and the four-way raw/embedding × train/dev experiment.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{Corpus, GraphemeVocab, PhonemeVocab, Split, Utterance};
use crate::ctc::{self, CtcError, CtcProblem};
use crate::layers::{Builder, Linear, Lstm, ParamStore};
use crate::metrics::{self, CorpusPer, MetricsError, PerPair};
use crate::numerics::{AdamConfig, AdamState, NumericsError, Prng, Tape, Tensor, Var};
use crate::tts::{EncoderModel, TtsError};

/// Recurrent units in the probe.
pub const PROBE_HIDDEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum G2pError {
    #[error("embedding mode needs a trained encoder")]
    MissingEncoder,
    #[error("every training utterance violates the CTC length constraint")]
    AllUtterancesSkipped,
    #[error("feature width {found}, probe expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("grapheme {0:?} not in vocabulary")]
    UnknownGrapheme(char),
    #[error("phoneme {0:?} not in vocabulary")]
    UnknownPhoneme(String),
    #[error("split {0} is empty")]
    EmptySplit(Split),
    #[error("probe loss became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("malformed probe: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Tts(#[from] TtsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, G2pError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProbeMode {
    Raw,
    Embedding,
}

impl ProbeMode {
    pub const ALL: [ProbeMode; 2] = [ProbeMode::Raw, ProbeMode::Embedding];

    pub fn name(self) -> &'static str {
        match self {
            ProbeMode::Raw => "raw",
            ProbeMode::Embedding => "embedding",
        }
    }
}

impl fmt::Display for ProbeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "raw" => Ok(ProbeMode::Raw),
            "embedding" => Ok(ProbeMode::Embedding),
            other => Err(format!("unknown probe mode {other:?} (expected raw or embedding)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub mode: ProbeMode,
    pub split: Split,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 5e-3,
            seed: 0,
            mode: ProbeMode::Raw,
            split: Split::Train,
        }
    }
}

/// Feature rows for one utterance: one-hot grapheme ids in raw mode, the
/// encoder output in embedding mode.
pub fn featurize(
    utterance: &Utterance,
    mode: ProbeMode,
    encoder: Option<&EncoderModel>,
    vocab: &GraphemeVocab,
) -> Result<Tensor> {
    let ids = utterance
        .graphemes
        .iter()
        .map(|&c| vocab.id(c).ok_or(G2pError::UnknownGrapheme(c)))
        .collect::<Result<Vec<_>>>()?;
    match mode {
        ProbeMode::Raw => {
            let width = vocab.len();
            let mut data = vec![0.0; ids.len() * width];
            for (t, &id) in ids.iter().enumerate() {
                data[t * width + id] = 1.0;
            }
            Ok(Tensor::matrix(ids.len(), width, data))
        }
        ProbeMode::Embedding => Ok(encoder.ok_or(G2pError::MissingEncoder)?.encode(&ids)?),
    }
}

/// Featurized utterance with its gold phoneme ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeExample {
    pub id: String,
    pub features: Tensor,
    pub target: Vec<usize>,
}

/// Examples for every utterance of `split`, in utterance id order.
pub fn probe_examples(
    corpus: &Corpus,
    split: Split,
    mode: ProbeMode,
    encoder: Option<&EncoderModel>,
    graphemes: &GraphemeVocab,
    phonemes: &PhonemeVocab,
) -> Result<Vec<ProbeExample>> {
    let mut utts = corpus.split(split);
    utts.sort_by(|a, b| a.id.cmp(&b.id));
    utts.into_iter()
        .map(|u| {
            let target = u
                .phonemes
                .iter()
                .map(|p| phonemes.id(p).ok_or_else(|| G2pError::UnknownPhoneme(p.clone())))
                .collect::<Result<Vec<_>>>()?;
            Ok(ProbeExample {
                id: u.id.clone(),
                features: featurize(u, mode, encoder, graphemes)?,
                target,
            })
        })
        .collect()
}

/// One LSTM layer and a linear map to phoneme logits (blank last).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    mode: ProbeMode,
    input_width: usize,
    output_width: usize,
    store: ParamStore,
    lstm: Lstm,
    output: Linear,
}

const META_MODE: &str = "meta.probe_mode";

impl ProbeModel {
    pub fn new(mode: ProbeMode, input_width: usize, output_width: usize, rng: &mut Prng) -> Self {
        let mut store = ParamStore::default();
        let mut b = Builder::Fresh { store: &mut store, rng };
        let lstm = Lstm::new(&mut b, "probe.lstm", input_width, PROBE_HIDDEN).expect("fresh parameters");
        let output = Linear::new(&mut b, "probe.output", PROBE_HIDDEN, output_width).expect("fresh parameters");
        Self {
            mode,
            input_width,
            output_width,
            store,
            lstm,
            output,
        }
    }

    pub fn mode(&self) -> ProbeMode {
        self.mode
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        let mode = match self.mode {
            ProbeMode::Raw => 0.0,
            ProbeMode::Embedding => 1.0,
        };
        self.store
            .named()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .chain(std::iter::once((META_MODE.to_string(), Tensor::scalar(mode))))
            .collect()
    }

    pub fn from_named(named: &[(String, Tensor)]) -> Result<Self> {
        let mode = match named.iter().find(|(n, _)| n == META_MODE).map(|(_, t)| t.item()) {
            Some(m) if m == 0.0 => ProbeMode::Raw,
            Some(m) if m == 1.0 => ProbeMode::Embedding,
            _ => return Err(G2pError::MalformedModel(format!("{META_MODE} missing or invalid"))),
        };
        let store = ParamStore::from_named(named.iter().filter(|(n, _)| n.starts_with("probe.")).cloned().collect());
        let dims = |name: &str| {
            store
                .get(name)
                .map(|t| (t.rows(), t.cols()))
                .ok_or_else(|| G2pError::MalformedModel(format!("{name} missing")))
        };
        let (input_width, gates) = dims("probe.lstm.wx")?;
        let (_, output_width) = dims("probe.output.weight")?;
        if gates != 4 * PROBE_HIDDEN {
            return Err(G2pError::MalformedModel(format!("probe has {gates} gate units")));
        }
        let mut b = Builder::Load { store: &store };
        let lstm = Lstm::new(&mut b, "probe.lstm", input_width, PROBE_HIDDEN)?;
        let output = Linear::new(&mut b, "probe.output", PROBE_HIDDEN, output_width)?;
        Ok(Self {
            mode,
            input_width,
            output_width,
            store,
            lstm,
            output,
        })
    }

    fn check_width(&self, features: &Tensor) -> Result<()> {
        if features.cols() != self.input_width {
            return Err(G2pError::WidthMismatch {
                expected: self.input_width,
                found: features.cols(),
            });
        }
        Ok(())
    }

    /// Logits `[T × (|V_p|+1)]` on `tape`.
    pub fn logits(&self, tape: &mut Tape, p: &[Var], features: Var) -> Result<Var> {
        let h = self.lstm.sequence(tape, p, features, false)?;
        Ok(self.output.forward(tape, p, h)?)
    }

    /// CTC negative log-likelihood of `target`, seeding gradients into the
    /// returned tape. Returns `None` when the target cannot fit.
    fn loss_and_grads(&self, features: &Tensor, target: &[usize]) -> Result<Option<(f64, Vec<Tensor>)>> {
        if ctc::min_frames(target) > features.rows() {
            return Ok(None);
        }
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let x = tape.constant(features.clone());
        let logits = self.logits(&mut tape, &p, x)?;
        let log_probs = tape.log_softmax_rows(logits)?;
        let problem = CtcProblem::new(tape.value(log_probs), target)?;
        let (nll, grad) = ctc::ctc_loss_and_grad(&problem)?;
        let grads = tape.backward_with(logits, &grad);
        Ok(Some((nll, p.iter().map(|&v| grads.get_or_zeros(v)).collect())))
    }
}

/// CTC loss of a probe whose parameters are `params` (in store order);
/// exposed for gradient checking.
pub fn probe_loss(model: &ProbeModel, params: &[Tensor], features: &Tensor, target: &[usize]) -> Result<f64> {
    let mut probe = model.clone();
    probe.store = ParamStore::from_named(
        model
            .store
            .named()
            .map(|(n, _)| n.to_string())
            .zip(params.iter().cloned())
            .collect(),
    );
    let mut tape = Tape::new();
    let p = probe.store.bind_frozen(&mut tape);
    let x = tape.constant(features.clone());
    let logits = probe.logits(&mut tape, &p, x)?;
    let log_probs = tape.log_softmax_rows(logits)?;
    Ok(ctc::ctc_forward(&CtcProblem::new(tape.value(log_probs), target)?)?)
}

/// Analytic gradient of [`probe_loss`] with respect to the parameters.
pub fn probe_loss_grad(model: &ProbeModel, features: &Tensor, target: &[usize]) -> Result<Vec<Tensor>> {
    model.check_width(features)?;
    match model.loss_and_grads(features, target)? {
        Some((_, g)) => Ok(g),
        None => Err(CtcError::TargetTooLong {
            frames: features.rows(),
            required: ctc::min_frames(target),
        }
        .into()),
    }
}

/// Greedy CTC decode of the probe's output.
pub fn probe_predict(model: &ProbeModel, features: &Tensor) -> Result<Vec<usize>> {
    model.check_width(features)?;
    if features.rows() == 0 {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new();
    let p = model.store.bind_frozen(&mut tape);
    let x = tape.constant(features.clone());
    let logits = model.logits(&mut tape, &p, x)?;
    let log_probs = tape.log_softmax_rows(logits)?;
    Ok(ctc::greedy_decode(tape.value(log_probs)))
}

/// Corpus PER of the probe's predictions, aggregated in example order.
pub fn evaluate_probe(model: &ProbeModel, examples: &[ProbeExample]) -> Result<CorpusPer> {
    let predictions = examples
        .iter()
        .map(|e| probe_predict(model, &e.features))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<PerPair<'_, usize>> = examples
        .iter()
        .zip(&predictions)
        .map(|(e, h)| PerPair {
            id: &e.id,
            reference: &e.target,
            hypothesis: h,
        })
        .collect();
    Ok(metrics::corpus_per(&pairs)?)
}

#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub model: ProbeModel,
    /// Micro PER on the dev examples after each epoch.
    pub dev_per: Vec<f64>,
    /// Training utterances whose targets need more frames than they have.
    pub skipped: usize,
}

/// Fit a probe with Adam, one utterance per step.
pub fn fit_probe(
    train: &[ProbeExample],
    dev: &[ProbeExample],
    input_width: usize,
    output_width: usize,
    config: &ProbeConfig,
) -> Result<TrainedProbe> {
    let rng = Prng::new(config.seed);
    let mut model = ProbeModel::new(config.mode, input_width, output_width, &mut rng.fork(1));
    let usable: Vec<usize> = (0..train.len())
        .filter(|&i| ctc::min_frames(&train[i].target) <= train[i].features.rows())
        .collect();
    let skipped = train.len() - usable.len();
    if usable.is_empty() {
        return Err(G2pError::AllUtterancesSkipped);
    }
    for e in train.iter().chain(dev) {
        model.check_width(&e.features)?;
    }
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), model.store.tensors());
    let mut order_rng = rng.fork(2);
    let mut order = usable;
    let mut dev_per = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order_rng.shuffle(&mut order);
        for &i in &order {
            let (nll, grads) = model
                .loss_and_grads(&train[i].features, &train[i].target)?
                .expect("length checked above");
            if !nll.is_finite() {
                return Err(G2pError::NonFiniteLoss { step: adam.step_count() });
            }
            adam.step(&mut model.store.tensors_mut(), &grads)?;
        }
        if !dev.is_empty() {
            dev_per.push(evaluate_probe(&model, dev)?.micro);
        }
    }
    Ok(TrainedProbe {
        model,
        dev_per,
        skipped,
    })
}

/// Featurize the configured training split and the dev split, then fit.
pub fn train_probe(
    corpus: &Corpus,
    graphemes: &GraphemeVocab,
    phonemes: &PhonemeVocab,
    config: &ProbeConfig,
    encoder: Option<&EncoderModel>,
) -> Result<TrainedProbe> {
    let train = probe_examples(corpus, config.split, config.mode, encoder, graphemes, phonemes)?;
    if train.is_empty() {
        return Err(G2pError::EmptySplit(config.split));
    }
    let dev = probe_examples(corpus, Split::Dev, config.mode, encoder, graphemes, phonemes)?;
    fit_probe(&train, &dev, input_width(config.mode, encoder, graphemes)?, phonemes.len() + 1, config)
}

/// Feature width for `mode`.
pub fn input_width(mode: ProbeMode, encoder: Option<&EncoderModel>, graphemes: &GraphemeVocab) -> Result<usize> {
    match mode {
        ProbeMode::Raw => Ok(graphemes.len()),
        ProbeMode::Embedding => Ok(encoder.ok_or(G2pError::MissingEncoder)?.output_dim()),
    }
}

/// One cell of the raw/embedding × train/dev grid.
#[derive(Debug, Clone)]
pub struct Table2Row {
    pub mode: ProbeMode,
    pub split: Split,
    pub per: CorpusPer,
    pub skipped: usize,
    pub probe: TrainedProbe,
}

/// Train the four probes and score each on the test split.
pub fn run_table2(
    corpus: &Corpus,
    graphemes: &GraphemeVocab,
    phonemes: &PhonemeVocab,
    encoder: &EncoderModel,
    base: &ProbeConfig,
) -> Result<Vec<Table2Row>> {
    let mut rows = Vec::with_capacity(4);
    for mode in ProbeMode::ALL {
        let feats = |split| probe_examples(corpus, split, mode, Some(encoder), graphemes, phonemes);
        let (train, dev, test) = (feats(Split::Train)?, feats(Split::Dev)?, feats(Split::Test)?);
        let width = input_width(mode, Some(encoder), graphemes)?;
        for split in [Split::Train, Split::Dev] {
            let config = ProbeConfig { mode, split, ..*base };
            let source = if split == Split::Train { &train } else { &dev };
            if source.is_empty() {
                return Err(G2pError::EmptySplit(split));
            }
            let probe = fit_probe(source, &dev, width, phonemes.len() + 1, &config)?;
            let per = evaluate_probe(&probe.model, &test)?;
            rows.push(Table2Row {
                mode,
                split,
                per,
                skipped: probe.skipped,
                probe,
            });
        }
    }
    Ok(rows)
}

/// `mode<TAB>train_split<TAB>per<TAB>skipped` with a header; PER is the
/// micro rate in percent.
pub fn format_table2(rows: &[Table2Row]) -> String {
    let mut out = String::from("mode\ttrain_split\tper\tskipped\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{:.2}\t{}\n", r.mode, r.split, 100.0 * r.per.micro, r.skipped));
    }
    out
}
