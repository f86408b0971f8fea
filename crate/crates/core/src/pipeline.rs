//! Experiment stages over a run directory. Each stage reads the files left
//! by earlier stages and writes its own, so every stage can be rerun alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, TableRow, TsneConfig};
use crate::checkpoint::{self, CheckpointError};
use crate::config::Config;
use crate::corpus::{self, Corpus, CorpusError, GraphemeVocab, PhonemeVocab, Split};
use crate::g2p::{self, G2pError, ProbeConfig, ProbeMode, ProbeModel};
use crate::metrics::CorpusPer;
use crate::numerics::Prng;
use crate::tts::{self, DecoderConfig, EncoderConfig, EmbeddingRecord, ProxyConfig, ProxyModel, TtsError};

pub const CORPUS: &str = "corpus.tsv";
pub const SPLITS: &str = "splits.tsv";
pub const TTS_MODEL: &str = "tts.gel";
pub const TTS_LOSS: &str = "tts_loss.tsv";
pub const EMBEDDINGS: &str = "embeddings.tsv";
pub const PROBE: &str = "probe.gel";
pub const PROBE_CURVE: &str = "probe_curve.tsv";
pub const PER: &str = "per.tsv";
pub const TABLE2: &str = "table2.tsv";
pub const TABLE2_RATES: &str = "table2_rates.tsv";
pub const TSNE: &str = "tsne.tsv";
pub const PURITY: &str = "purity.tsv";
pub const SWAP: &str = "swap.tsv";
pub const REPORT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing input {0:?}")]
    MissingInput(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{file}: {message}")]
    BadInput { file: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tts(#[from] TtsError),
    #[error(transparent)]
    G2p(#[from] G2pError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Files a stage read and wrote, plus a one-line human summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageOutcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write via a sibling temporary file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn read_input(dir: &Path, name: &str) -> Result<(PathBuf, Vec<u8>)> {
    let path = dir.join(name);
    match fs::read(&path) {
        Ok(bytes) => Ok((path, bytes)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(PipelineError::MissingInput(name.to_string())),
        Err(e) => Err(PipelineError::Io {
            path,
            message: e.to_string(),
        }),
    }
}

fn read_text(dir: &Path, name: &str) -> Result<(PathBuf, String)> {
    let (path, bytes) = read_input(dir, name)?;
    let text = String::from_utf8(bytes).map_err(|_| PipelineError::BadInput {
        file: name.to_string(),
        message: "not UTF-8".into(),
    })?;
    Ok((path, text))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

/// Per-stage seed derived from the run seed.
pub fn stage_seed(config: &Config, stage: u64) -> u64 {
    Prng::new(config.u64("seed")).fork(stage).next_u64()
}

const SALT_SPLIT: u64 = 1;
const SALT_ACOUSTIC: u64 = 2;
const SALT_TTS: u64 = 3;
const SALT_PROBE: u64 = 4;
const SALT_SUBSAMPLE: u64 = 5;
const SALT_TSNE: u64 = 6;
const SALT_SWAP: u64 = 7;

pub fn proxy_config(config: &Config) -> ProxyConfig {
    ProxyConfig {
        encoder: EncoderConfig {
            embed_dim: config.usize("tts.embed_dim"),
            bank_width: config.usize("tts.bank_width"),
            bank_channels: config.usize("tts.bank_channels"),
            hidden: config.usize("tts.hidden"),
            self_attention: config.bool("tts.self_attention"),
        },
        decoder: DecoderConfig {
            hidden: config.usize("tts.decoder_hidden"),
            attention_dim: config.usize("tts.attention_dim"),
            reduction: config.usize("tts.reduction").max(1),
            frame_dim: config.usize("acoustic.frame_dim"),
        },
        epochs: config.usize("tts.epochs"),
        lr: config.f64("tts.lr"),
        clip_norm: Some(config.f64("tts.clip_norm")).filter(|&c| c > 0.0),
    }
}

pub fn probe_config(config: &Config) -> ProbeConfig {
    ProbeConfig {
        epochs: config.usize("g2p.epochs"),
        lr: config.f64("g2p.lr"),
        seed: stage_seed(config, SALT_PROBE),
        mode: config.str("g2p.mode").parse().expect("validated choice"),
        split: config.str("g2p.split").parse().expect("validated choice"),
    }
}

/// Split corpus and its train-split vocabularies.
pub struct Data {
    pub corpus: Corpus,
    pub graphemes: GraphemeVocab,
    pub phonemes: PhonemeVocab,
    pub inputs: Vec<PathBuf>,
}

pub fn load_data(dir: &Path) -> Result<Data> {
    let (cpath, ctext) = read_text(dir, CORPUS)?;
    let (spath, stext) = read_text(dir, SPLITS)?;
    let corpus = corpus::read_splits(corpus::read_corpus(&ctext)?, &stext)?;
    let (graphemes, phonemes) = corpus::build_vocabs(&corpus)?;
    Ok(Data {
        corpus,
        graphemes,
        phonemes,
        inputs: vec![cpath, spath],
    })
}

pub fn load_proxy(dir: &Path) -> Result<(PathBuf, ProxyModel)> {
    let (path, bytes) = read_input(dir, TTS_MODEL)?;
    Ok((path, ProxyModel::from_named(&checkpoint::decode(&bytes)?)?))
}

pub fn load_probe(dir: &Path, name: &str) -> Result<(PathBuf, ProbeModel)> {
    let (path, bytes) = read_input(dir, name)?;
    Ok((path, ProbeModel::from_named(&checkpoint::decode(&bytes)?)?))
}

fn save_named(path: &Path, named: &[(String, crate::numerics::Tensor)]) -> Result<()> {
    write_atomic(path, &checkpoint::encode(named.iter().map(|(n, t)| (n.as_str(), t))))
}

pub fn gen_corpus(config: &Config, dir: &Path) -> Result<StageOutcome> {
    ensure_dir(dir)?;
    let corpus = corpus::generate_corpus(config.usize("n"), config.u64("seed"));
    let path = dir.join(CORPUS);
    write_atomic(&path, corpus::write_corpus(&corpus).as_bytes())?;
    Ok(StageOutcome {
        inputs: vec![],
        outputs: vec![path],
        summary: format!("{} utterances", corpus.len()),
    })
}

pub fn split(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let (cpath, text) = read_text(dir, CORPUS)?;
    let corpus = corpus::split_corpus(
        corpus::read_corpus(&text)?,
        config.usize("split.test"),
        config.usize("split.dev"),
        stage_seed(config, SALT_SPLIT),
    )?;
    // fail early if dev/test use symbols the train split lacks
    corpus::build_vocabs(&corpus)?;
    let path = dir.join(SPLITS);
    write_atomic(&path, corpus::write_splits(&corpus).as_bytes())?;
    let s = corpus.splits.as_ref().expect("just split");
    Ok(StageOutcome {
        inputs: vec![cpath],
        outputs: vec![path],
        summary: format!("train {} dev {} test {}", s.train.len(), s.dev.len(), s.test.len()),
    })
}

/// Acoustic targets for every utterance of the corpus.
pub fn acoustic_targets(
    config: &Config,
    data: &Data,
) -> Result<std::collections::BTreeMap<String, crate::numerics::Tensor>> {
    let seed = stage_seed(config, SALT_ACOUSTIC);
    let spec = tts::AcousticSpec::new(&data.phonemes, config.usize("acoustic.frame_dim"), seed);
    Ok(tts::build_targets(&data.corpus, &spec, seed)?)
}

pub fn train_tts(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let data = load_data(dir)?;
    let targets = acoustic_targets(config, &data)?;
    let examples = tts::training_examples(&data.corpus, Split::Train, &data.graphemes, &targets)?;
    let trained = tts::train_proxy(
        &examples,
        data.graphemes.len(),
        &proxy_config(config),
        stage_seed(config, SALT_TTS),
    )?;
    let model_path = dir.join(TTS_MODEL);
    save_named(&model_path, &trained.model.to_named())?;
    let mut curve = String::from("epoch\tloss\n");
    for (e, l) in trained.curve.iter().enumerate() {
        let _ = writeln!(curve, "{}\t{l:.16e}", e + 1);
    }
    let loss_path = dir.join(TTS_LOSS);
    write_atomic(&loss_path, curve.as_bytes())?;
    Ok(StageOutcome {
        inputs: data.inputs,
        outputs: vec![model_path, loss_path],
        summary: match (trained.curve.first(), trained.curve.last()) {
            (Some(a), Some(b)) => format!("loss {a:.5} -> {b:.5} over {} epochs", trained.curve.len()),
            _ => "no training epochs".into(),
        },
    })
}

pub fn extract_emb(_config: &Config, dir: &Path) -> Result<StageOutcome> {
    let data = load_data(dir)?;
    let (mpath, model) = load_proxy(dir)?;
    let records = tts::extract_embeddings(&model.encoder, &data.corpus, Split::Test, &data.graphemes)?;
    let path = dir.join(EMBEDDINGS);
    write_atomic(&path, analysis::format_table(&analysis::record_rows(&records), "e").as_bytes())?;
    let mut inputs = data.inputs;
    inputs.push(mpath);
    Ok(StageOutcome {
        inputs,
        outputs: vec![path],
        summary: format!("{} embeddings", records.len()),
    })
}

fn probe_encoder(dir: &Path, mode: ProbeMode, inputs: &mut Vec<PathBuf>) -> Result<Option<ProxyModel>> {
    match mode {
        ProbeMode::Raw => Ok(None),
        ProbeMode::Embedding => {
            let (path, model) = load_proxy(dir)?;
            inputs.push(path);
            Ok(Some(model))
        }
    }
}

pub fn train_g2p(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let data = load_data(dir)?;
    let mut inputs = data.inputs.clone();
    let pc = probe_config(config);
    let model = probe_encoder(dir, pc.mode, &mut inputs)?;
    let trained = g2p::train_probe(
        &data.corpus,
        &data.graphemes,
        &data.phonemes,
        &pc,
        model.as_ref().map(|m| &m.encoder),
    )?;
    let probe_path = dir.join(PROBE);
    save_named(&probe_path, &trained.model.to_named())?;
    let mut curve = format!("# skipped\t{}\nepoch\tdev_per\n", trained.skipped);
    for (e, p) in trained.dev_per.iter().enumerate() {
        let _ = writeln!(curve, "{}\t{p:.16e}", e + 1);
    }
    let curve_path = dir.join(PROBE_CURVE);
    write_atomic(&curve_path, curve.as_bytes())?;
    Ok(StageOutcome {
        inputs,
        outputs: vec![probe_path, curve_path],
        summary: format!(
            "{} probe on {}: final dev PER {}",
            pc.mode,
            pc.split,
            trained.dev_per.last().map_or("n/a".into(), |p| format!("{:.2}%", 100.0 * p))
        ),
    })
}

fn format_rates(per: &CorpusPer) -> String {
    format!("{:.16e}\t{:.16e}\t{}", per.micro, per.macro_avg, per.utterances)
}

pub fn eval_per(_config: &Config, dir: &Path) -> Result<StageOutcome> {
    let data = load_data(dir)?;
    let (ppath, probe) = load_probe(dir, PROBE)?;
    let mut inputs = data.inputs.clone();
    inputs.push(ppath);
    let model = probe_encoder(dir, probe.mode(), &mut inputs)?;
    let test = g2p::probe_examples(
        &data.corpus,
        Split::Test,
        probe.mode(),
        model.as_ref().map(|m| &m.encoder),
        &data.graphemes,
        &data.phonemes,
    )?;
    let per = g2p::evaluate_probe(&probe, &test)?;
    let path = dir.join(PER);
    write_atomic(&path, format!("micro\tmacro\tutterances\n{}\n", format_rates(&per)).as_bytes())?;
    Ok(StageOutcome {
        inputs,
        outputs: vec![path],
        summary: format!("test PER {:.2}% (macro {:.2}%)", 100.0 * per.micro, 100.0 * per.macro_avg),
    })
}

pub fn table2_probe_file(mode: ProbeMode, split: Split) -> String {
    format!("table2_{mode}_{split}.gel")
}

pub fn table2(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let data = load_data(dir)?;
    let (mpath, model) = load_proxy(dir)?;
    let rows = g2p::run_table2(
        &data.corpus,
        &data.graphemes,
        &data.phonemes,
        &model.encoder,
        &probe_config(config),
    )?;
    let mut outputs = Vec::new();
    for r in &rows {
        let path = dir.join(table2_probe_file(r.mode, r.split));
        save_named(&path, &r.probe.model.to_named())?;
        outputs.push(path);
    }
    let grid = dir.join(TABLE2);
    write_atomic(&grid, g2p::format_table2(&rows).as_bytes())?;
    let mut rates = String::from("mode\ttrain_split\tmicro\tmacro\tutterances\n");
    for r in &rows {
        let _ = writeln!(rates, "{}\t{}\t{}", r.mode, r.split, format_rates(&r.per));
    }
    let rates_path = dir.join(TABLE2_RATES);
    write_atomic(&rates_path, rates.as_bytes())?;
    outputs.extend([grid, rates_path]);
    let mut inputs = data.inputs;
    inputs.push(mpath);
    Ok(StageOutcome {
        inputs,
        outputs,
        summary: rows
            .iter()
            .map(|r| format!("{}/{} {:.2}%", r.mode, r.split, 100.0 * r.per.micro))
            .collect::<Vec<_>>()
            .join(", "),
    })
}

fn rows_to_records(rows: Vec<TableRow>) -> Vec<EmbeddingRecord> {
    rows.into_iter()
        .map(|r| EmbeddingRecord {
            vector: r.values,
            utterance_id: r.utterance_id,
            position: r.position,
            grapheme: r.grapheme,
            label: r.phoneme,
        })
        .collect()
}

/// The seeded analysis subsample of the exported test embeddings.
pub fn load_analysis_records(config: &Config, dir: &Path) -> Result<(PathBuf, Vec<EmbeddingRecord>)> {
    let (path, text) = read_text(dir, EMBEDDINGS)?;
    let records = rows_to_records(analysis::parse_table(&text)?);
    Ok((
        path,
        analysis::subsample(&records, config.usize("analysis.max_points"), stage_seed(config, SALT_SUBSAMPLE)),
    ))
}

pub fn tsne(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let (epath, records) = load_analysis_records(config, dir)?;
    let dim = records.first().map_or(0, |r| r.vector.len());
    let x = crate::numerics::Tensor::matrix(records.len(), dim, records.iter().flat_map(|r| r.vector.clone()).collect());
    let tc = TsneConfig {
        perplexity: config.f64("tsne.perplexity"),
        iterations: config.usize("tsne.iterations"),
        learning_rate: config.f64("tsne.learning_rate"),
        seed: stage_seed(config, SALT_TSNE),
        ..TsneConfig::default()
    };
    let result = analysis::tsne_embed(&x, &tc)?;
    let path = dir.join(TSNE);
    write_atomic(
        &path,
        analysis::format_table(&analysis::point_rows(&records, &result.points), "y").as_bytes(),
    )?;
    Ok(StageOutcome {
        inputs: vec![epath],
        outputs: vec![path],
        summary: format!(
            "{} points, final KL {:.4}",
            records.len(),
            result.kl.last().copied().unwrap_or(f64::NAN)
        ),
    })
}

/// Purity of trained embeddings and of the one-hot baseline, plus the
/// punctuation cohesion check.
pub struct PurityComparison {
    pub embedding: analysis::PurityReport,
    pub one_hot: analysis::PurityReport,
    pub punctuation: analysis::PunctuationCohesion,
}

pub fn compare_purity(records: &[EmbeddingRecord], k: usize) -> Result<PurityComparison> {
    Ok(PurityComparison {
        embedding: analysis::knn_purity(records, k)?,
        one_hot: analysis::knn_purity(&analysis::one_hot_baseline(records), k)?,
        punctuation: analysis::punctuation_cohesion(records)?,
    })
}

pub fn format_purity(c: &PurityComparison) -> String {
    let mut out = String::from("scope\tkey\tembedding\tone_hot\n");
    let _ = writeln!(out, "overall\tall\t{:.6}\t{:.6}", c.embedding.overall, c.one_hot.overall);
    for (g, v) in &c.embedding.per_grapheme {
        let _ = writeln!(out, "grapheme\t{g}\t{v:.6}\t{:.6}", c.one_hot.per_grapheme[g]);
    }
    for (p, v) in &c.embedding.per_phoneme {
        let _ = writeln!(out, "phoneme\t{p}\t{v:.6}\t{:.6}", c.one_hot.per_phoneme[p]);
    }
    let _ = writeln!(out, "punctuation\twithin\t{:.6}\t", c.punctuation.within);
    let _ = writeln!(out, "punctuation\tacross\t{:.6}\t", c.punctuation.across);
    out
}

pub fn purity(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let (epath, records) = load_analysis_records(config, dir)?;
    let k = config.usize("purity.k");
    let c = compare_purity(&records, k)?;
    let path = dir.join(PURITY);
    write_atomic(&path, format_purity(&c).as_bytes())?;
    Ok(StageOutcome {
        inputs: vec![epath],
        outputs: vec![path],
        summary: format!(
            "k={k} purity {:.3} (one-hot {:.3}); punctuation cohesion {}",
            c.embedding.overall,
            c.one_hot.overall,
            if c.punctuation.holds() { "holds" } else { "fails" }
        ),
    })
}

/// Matched and mismatched swap summaries on the test split.
pub fn swap_experiment(
    config: &Config,
    data: &Data,
    encoder: &tts::EncoderModel,
    probe: &ProbeModel,
) -> Result<(analysis::SwapSummary, analysis::SwapSummary)> {
    let utts = data.corpus.split(Split::Test);
    let n = config.usize("swap.pairs");
    let seed = stage_seed(config, SALT_SWAP);
    let run = |matched: bool| -> Result<analysis::SwapSummary> {
        let pairs = analysis::sample_swap_pairs(&utts, n, matched, seed);
        Ok(analysis::run_swaps(encoder, probe, &data.graphemes, &data.phonemes, &utts, &pairs)?)
    };
    Ok((run(true)?, run(false)?))
}

pub fn swap(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let data = load_data(dir)?;
    let (mpath, model) = load_proxy(dir)?;
    let probe_file = table2_probe_file(ProbeMode::Embedding, Split::Train);
    let (ppath, probe) = load_probe(dir, &probe_file)?;
    let (matched, mismatched) = swap_experiment(config, &data, &model.encoder, &probe)?;
    let mut out = String::from("context\tpairs\tdonor_rate\tlocal_rate\n");
    for (name, s) in [("matched", &matched), ("mismatched", &mismatched)] {
        let _ = writeln!(out, "{name}\t{}\t{:.6}\t{:.6}", s.pairs, s.donor_rate, s.local_rate);
    }
    let path = dir.join(SWAP);
    write_atomic(&path, out.as_bytes())?;
    let mut inputs = data.inputs;
    inputs.extend([mpath, ppath]);
    Ok(StageOutcome {
        inputs,
        outputs: vec![path],
        summary: format!(
            "donor phoneme carried in {:.1}% of {} matched swaps, {:.1}% of {} mismatched",
            100.0 * matched.donor_rate,
            matched.pairs,
            100.0 * mismatched.donor_rate,
            mismatched.pairs
        ),
    })
}

fn parse_tsv(name: &str, text: &str) -> Result<Vec<Vec<String>>> {
    let rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect();
    if rows.is_empty() {
        return Err(PipelineError::BadInput {
            file: name.to_string(),
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

fn percent(name: &str, field: &str) -> Result<String> {
    field
        .parse::<f64>()
        .map(|v| format!("{:.2}", 100.0 * v))
        .map_err(|_| PipelineError::BadInput {
            file: name.to_string(),
            message: format!("bad number {field:?}"),
        })
}

/// One text summary of the grid, purity and swap outputs.
pub fn report(config: &Config, dir: &Path) -> Result<StageOutcome> {
    let load = |name: &'static str, file: &str| -> Result<(PathBuf, String)> {
        read_text(dir, file).map_err(|e| match e {
            PipelineError::MissingInput(_) => PipelineError::MissingInput(name.to_string()),
            other => other,
        })
    };
    let (tpath, table) = load("table2", TABLE2_RATES)?;
    let (ppath, purity) = load("purity", PURITY)?;
    let (spath, swap) = load("swap", SWAP)?;
    let mut out = String::new();
    let _ = writeln!(out, "config_sha256\t{}", sha256_hex(config.to_text().as_bytes()));
    let _ = writeln!(out, "\n[per]\nmode\ttrain_split\tmicro_%\tmacro_%");
    for r in parse_tsv(TABLE2_RATES, &table)? {
        if r.len() < 4 {
            return Err(PipelineError::BadInput {
                file: TABLE2_RATES.into(),
                message: "short row".into(),
            });
        }
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r[0], r[1], percent(TABLE2_RATES, &r[2])?, percent(TABLE2_RATES, &r[3])?);
    }
    let _ = writeln!(out, "\n[purity]");
    out.push_str(purity.lines().next().unwrap_or(""));
    out.push('\n');
    for r in parse_tsv(PURITY, &purity)? {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    let _ = writeln!(out, "\n[swap]\ncontext\tpairs\tdonor_rate_%");
    for r in parse_tsv(SWAP, &swap)? {
        if r.len() < 3 {
            return Err(PipelineError::BadInput {
                file: SWAP.into(),
                message: "short row".into(),
            });
        }
        let _ = writeln!(out, "{}\t{}\t{}", r[0], r[1], percent(SWAP, &r[2])?);
    }
    let path = dir.join(REPORT);
    write_atomic(&path, out.as_bytes())?;
    Ok(StageOutcome {
        inputs: vec![tpath, ppath, spath],
        outputs: vec![path],
        summary: "report written".into(),
    })
}

/// Subcommand names in pipeline order.
pub const STAGES: [&str; 11] = [
    "gen-corpus",
    "split",
    "train-tts",
    "extract-emb",
    "train-g2p",
    "eval-per",
    "table2",
    "tsne",
    "purity",
    "swap",
    "report",
];

/// Run the stage called `name`.
pub fn run_stage(name: &str, config: &Config, dir: &Path) -> Option<Result<StageOutcome>> {
    Some(match name {
        "gen-corpus" => gen_corpus(config, dir),
        "split" => split(config, dir),
        "train-tts" => train_tts(config, dir),
        "extract-emb" => extract_emb(config, dir),
        "train-g2p" => train_g2p(config, dir),
        "eval-per" => eval_per(config, dir),
        "table2" => table2(config, dir),
        "tsne" => tsne(config, dir),
        "purity" => purity(config, dir),
        "swap" => swap(config, dir),
        "report" => report(config, dir),
        _ => return None,
    })
}
