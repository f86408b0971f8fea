//! Proxy text-to-speech model: a contextual grapheme encoder trained through
//! an attention decoder to predict synthetic acoustic frames.

mod acoustic;
mod decoder;
mod encoder;
mod train;

pub use acoustic::{build_targets, synth_target, AcousticSpec};
pub use decoder::{
    attend_additive, attend_forward, forward_attention_step, monotonic_fraction, AdditiveAttention, DecoderConfig,
    DecoderModel, DecoderRun, FORWARD_EPS,
};
pub use encoder::{EncoderConfig, EncoderModel, EncoderOutput};
pub use train::{
    alignments, extract_embeddings, proxy_loss, train_proxy, training_examples, EmbeddingRecord, ProxyConfig,
    ProxyModel, TrainedProxy, TrainingExample,
};

use crate::numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TtsError {
    #[error("utterance {0} has no phonemes")]
    EmptyPhonemeSequence(String),
    #[error("phoneme {0:?} has no acoustic code")]
    UnknownPhoneme(String),
    #[error("grapheme id {id} outside vocabulary of size {size}")]
    IndexOutOfVocabulary { id: usize, size: usize },
    #[error("empty grapheme sequence")]
    EmptyInput,
    #[error("grapheme {0:?} not in vocabulary")]
    UnknownGrapheme(char),
    #[error("attention weights degenerate")]
    DegenerateDistribution,
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("no acoustic target for utterance {0}")]
    MissingTarget(String),
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("frame width {found}, model expects {expected}")]
    FrameWidth { expected: usize, found: usize },
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, TtsError>;
