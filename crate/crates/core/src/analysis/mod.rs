//! Embedding-space analysis: exact t-SNE, nearest-neighbour label purity,
//! punctuation cohesion, the embedding swap experiment, and table export.

mod export;
mod purity;
mod swap;
mod tsne;

pub use export::{export_table, format_table, parse_table, point_rows, read_table, record_rows, TableRow};
pub use purity::{
    knn_purity, nearest_neighbors, one_hot_baseline, punctuation_cohesion, PunctuationCohesion, PurityReport,
    PUNCTUATION,
};
pub use swap::{context_keys, run_swaps, sample_swap_pairs, swap_and_probe, ContextKey, SwapPair, SwapReport, SwapSummary};
pub use tsne::{conditional_affinities, tsne_embed, TsneConfig, TsneResult, MAX_POINTS};

use crate::g2p::G2pError;
use crate::numerics::Prng;
use crate::tts::{EmbeddingRecord, TtsError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("perplexity {perplexity} cannot be matched at point {point}")]
    PerplexityInfeasible { perplexity: f64, point: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{n} points exceed the exact t-SNE limit of {max}")]
    TooManyPoints { n: usize, max: usize },
    #[error("{n} records are too few for k = {k}")]
    TooFewRecords { n: usize, k: usize },
    #[error("position {position} outside sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("swap experiments need an embedding-mode probe")]
    WrongProbeMode,
    #[error("i/o failure: {0}")]
    Io(String),
    #[error(transparent)]
    Tts(#[from] TtsError),
    #[error(transparent)]
    G2p(#[from] G2pError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// Seeded random subset of at most `max` records, kept in original order.
pub fn subsample(records: &[EmbeddingRecord], max: usize, seed: u64) -> Vec<EmbeddingRecord> {
    if records.len() <= max {
        return records.to_vec();
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    Prng::new(seed).shuffle(&mut idx);
    idx.truncate(max);
    idx.sort_unstable();
    idx.into_iter().map(|i| records[i].clone()).collect()
}
