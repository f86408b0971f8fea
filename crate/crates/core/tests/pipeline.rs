use gelab::config::Config;
use gelab::pipeline::{self, PipelineError};

fn tiny() -> Config {
    let mut c = Config::default();
    for kv in [
        "n=120",
        "split.test=20",
        "split.dev=20",
        "tts.embed_dim=8",
        "tts.bank_width=2",
        "tts.bank_channels=4",
        "tts.hidden=8",
        "tts.decoder_hidden=16",
        "tts.attention_dim=8",
        "tts.epochs=1",
        "g2p.epochs=1",
        "tsne.perplexity=5",
        "tsne.iterations=260",
        "purity.k=3",
        "swap.pairs=5",
    ] {
        c.apply_override(kv).unwrap();
    }
    c
}

#[test]
fn stages_chain_through_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    for stage in pipeline::STAGES {
        let out = pipeline::run_stage(stage, &cfg, dir.path()).unwrap().unwrap_or_else(|e| panic!("{stage}: {e}"));
        for p in &out.outputs {
            assert!(p.exists(), "{stage} did not write {}", p.display());
        }
    }
    let report = std::fs::read_to_string(dir.path().join(pipeline::REPORT)).unwrap();
    assert!(report.starts_with("config_sha256\t"));
    assert!(report.contains("[swap]"));
}

#[test]
fn stages_are_deterministic() {
    let cfg = tiny();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        for stage in ["gen-corpus", "split", "train-tts", "extract-emb"] {
            pipeline::run_stage(stage, &cfg, dir.path()).unwrap().unwrap();
        }
        [pipeline::CORPUS, pipeline::SPLITS, pipeline::TTS_MODEL, pipeline::EMBEDDINGS]
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn missing_inputs_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = pipeline::split(&tiny(), dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::MissingInput(ref n) if n == pipeline::CORPUS));
    let err = pipeline::report(&tiny(), dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::MissingInput(ref n) if n == "table2"));
}

#[test]
fn unknown_stage_is_none() {
    let dir = tempfile::tempdir().unwrap();
    assert!(pipeline::run_stage("nope", &tiny(), dir.path()).is_none());
}
