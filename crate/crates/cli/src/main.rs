use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gelab::config::Config;
use gelab::pipeline::{self, StageOutcome};

#[derive(Parser)]
#[command(name = "gelab", version, about = "Grapheme embedding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file of `key=value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory.
    #[arg(long, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Alias for `--set seed=N`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    GenCorpus(Common),
    /// Assign train/dev/test splits.
    Split(Common),
    /// Train the proxy TTS model.
    TrainTts(Common),
    /// Export test-split encoder embeddings.
    ExtractEmb(Common),
    /// Train one phoneme probe.
    TrainG2p(Common),
    /// Score the probe on the test split.
    EvalPer(Common),
    /// Train and score the 2x2 probe grid.
    Table2(Common),
    /// Project embeddings to two dimensions.
    Tsne(Common),
    /// Nearest-neighbour purity against the one-hot baseline.
    Purity(Common),
    /// Embedding swap experiment.
    Swap(Common),
    /// Summarise a finished run directory.
    Report(Common),
}

impl Command {
    fn split(&self) -> (&'static str, &Common) {
        match self {
            Command::GenCorpus(c) => ("gen-corpus", c),
            Command::Split(c) => ("split", c),
            Command::TrainTts(c) => ("train-tts", c),
            Command::ExtractEmb(c) => ("extract-emb", c),
            Command::TrainG2p(c) => ("train-g2p", c),
            Command::EvalPer(c) => ("eval-per", c),
            Command::Table2(c) => ("table2", c),
            Command::Tsne(c) => ("tsne", c),
            Command::Purity(c) => ("purity", c),
            Command::Swap(c) => ("swap", c),
            Command::Report(c) => ("report", c),
        }
    }
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    config: BTreeMap<String, String>,
    seed: u64,
    version: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    duration_secs: f64,
}

fn resolve_config(common: &Common) -> Result<Config> {
    let mut config = Config::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("--config {}", path.display()))?;
        config.apply_text(&text).with_context(|| format!("--config {}", path.display()))?;
    }
    for kv in &common.set {
        config.apply_override(kv).with_context(|| format!("--set {kv}"))?;
    }
    if let Some(seed) = common.seed {
        config.set("seed", &seed.to_string()).context("--seed")?;
    }
    Ok(config)
}

fn digests(dir: &Path, paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let shown = p.strip_prefix(dir).unwrap_or(p);
            Ok(FileDigest {
                path: shown.display().to_string(),
                sha256: pipeline::sha256_hex(&bytes),
            })
        })
        .collect()
}

fn write_manifest(name: &str, config: &Config, dir: &Path, outcome: &StageOutcome, started: Instant) -> Result<PathBuf> {
    let manifest = RunManifest {
        command: name.to_string(),
        argv: std::env::args().collect(),
        config: config.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        seed: config.u64("seed"),
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs: digests(dir, &outcome.inputs)?,
        outputs: digests(dir, &outcome.outputs)?,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    let path = dir.join(format!("{name}.manifest.json"));
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    pipeline::write_atomic(&path, &json)?;
    Ok(path)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let (name, common) = cli.command.split();
    let config = match resolve_config(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    for (key, value) in config.entries() {
        let note = if config.is_default(key) { " (default)" } else { "" };
        eprintln!("{key}={value}{note}");
    }
    match run(name, &config, &common.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(name: &str, config: &Config, dir: &Path) -> Result<()> {
    let started = Instant::now();
    let outcome = pipeline::run_stage(name, config, dir).expect("subcommands mirror the stage list")?;
    let manifest = write_manifest(name, config, dir, &outcome, started)?;
    eprintln!("{name}: {}", outcome.summary);
    for p in &outcome.outputs {
        println!("{}", p.display());
    }
    println!("{}", manifest.display());
    Ok(())
}
