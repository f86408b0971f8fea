//! Flat `key=value` run configuration with typed, validated entries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{location}unknown key {key:?}")]
    UnknownKey { key: String, location: String },
    #[error("{location}key {key:?}: {message}")]
    BadValue { key: String, message: String, location: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    Choice(&'static [&'static str]),
}

struct Entry {
    key: &'static str,
    default: &'static str,
    kind: Kind,
}

const fn entry(key: &'static str, default: &'static str, kind: Kind) -> Entry {
    Entry { key, default, kind }
}

const ENTRIES: &[Entry] = &[
    entry("seed", "0", Kind::Int),
    entry("n", "2000", Kind::Int),
    entry("split.test", "200", Kind::Int),
    entry("split.dev", "400", Kind::Int),
    entry("acoustic.frame_dim", "16", Kind::Int),
    entry("tts.embed_dim", "64", Kind::Int),
    entry("tts.bank_width", "8", Kind::Int),
    entry("tts.bank_channels", "32", Kind::Int),
    entry("tts.hidden", "64", Kind::Int),
    entry("tts.self_attention", "false", Kind::Bool),
    entry("tts.decoder_hidden", "128", Kind::Int),
    entry("tts.attention_dim", "64", Kind::Int),
    entry("tts.reduction", "1", Kind::Int),
    entry("tts.epochs", "10", Kind::Int),
    entry("tts.lr", "0.001", Kind::Float),
    entry("tts.clip_norm", "1.0", Kind::Float),
    entry("g2p.epochs", "20", Kind::Int),
    entry("g2p.lr", "0.005", Kind::Float),
    entry("g2p.mode", "embedding", Kind::Choice(&["raw", "embedding"])),
    entry("g2p.split", "train", Kind::Choice(&["train", "dev"])),
    entry("analysis.max_points", "3000", Kind::Int),
    entry("purity.k", "10", Kind::Int),
    entry("tsne.perplexity", "30", Kind::Float),
    entry("tsne.iterations", "1000", Kind::Int),
    entry("tsne.learning_rate", "200", Kind::Float),
    entry("swap.pairs", "100", Kind::Int),
];

fn lookup(key: &str) -> Option<&'static Entry> {
    ENTRIES.iter().find(|e| e.key == key)
}

fn check(kind: Kind, value: &str) -> Result<(), String> {
    match kind {
        Kind::Int => value.parse::<u64>().map(|_| ()).map_err(|_| format!("expected a non-negative integer, got {value:?}")),
        Kind::Float => match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => Err(format!("expected a finite number, got {value:?}")),
        },
        Kind::Bool => value.parse::<bool>().map(|_| ()).map_err(|_| format!("expected true or false, got {value:?}")),
        Kind::Choice(options) if options.contains(&value) => Ok(()),
        Kind::Choice(options) => Err(format!("expected one of {options:?}, got {value:?}")),
    }
}

/// Every key has a default; files and overrides replace individual values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
    overridden: BTreeMap<&'static str, bool>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: ENTRIES.iter().map(|e| (e.key, e.default.to_string())).collect(),
            overridden: BTreeMap::new(),
        }
    }
}

impl Config {
    fn set_at(&mut self, key: &str, value: &str, location: String) -> Result<(), ConfigError> {
        let e = lookup(key).ok_or_else(|| ConfigError::UnknownKey {
            key: key.to_string(),
            location: location.clone(),
        })?;
        check(e.kind, value).map_err(|message| ConfigError::BadValue {
            key: key.to_string(),
            message,
            location,
        })?;
        self.values.insert(e.key, value.to_string());
        self.overridden.insert(e.key, true);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(key, value, String::new())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            message: format!("override {assignment:?} is not key=value"),
        })?;
        self.set(k.trim(), v.trim())
    }

    /// Apply a config file: `key = value` lines, `#` comments, blank lines.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set_at(k.trim(), v.trim(), format!("line {}: ", n + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("config key {key:?} is not declared"))
    }

    pub fn usize(&self, key: &str) -> usize {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.raw(key).parse().expect("validated on set")
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn is_default(&self, key: &str) -> bool {
        !self.overridden.get(key).copied().unwrap_or(false)
    }

    /// All resolved entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (*k, v.as_str()))
    }

    /// Canonical file form; parsing it reproduces this configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let mut c = Config::default();
        assert_eq!(c.usize("n"), 2000);
        assert!(c.is_default("n"));
        c.apply_override("n=100").unwrap();
        c.apply_override("seed = 7").unwrap();
        assert_eq!((c.usize("n"), c.u64("seed")), (100, 7));
        assert!(!c.is_default("n"));
        assert_eq!(Config::parse(&c.to_text()).unwrap().to_text(), c.to_text());
    }

    #[test]
    fn file_syntax() {
        let c = Config::parse("# run\n\ntts.epochs = 3  # short\ng2p.mode=raw\n").unwrap();
        assert_eq!(c.usize("tts.epochs"), 3);
        assert_eq!(c.str("g2p.mode"), "raw");
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            Config::parse("n = 5\nbogus = 1\n").unwrap_err(),
            ConfigError::UnknownKey {
                key: "bogus".into(),
                location: "line 2: ".into()
            }
        );
        let e = Config::parse("\ntts.lr = fast\n").unwrap_err();
        assert!(e.to_string().starts_with("line 2: key \"tts.lr\""), "{e}");
        assert!(matches!(Config::parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(Config::parse("g2p.split = test").is_err());
        assert!(Config::default().apply_override("n").is_err());
    }
}
