use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AnalysisError, Result};
use crate::numerics::Tensor;
use crate::tts::EmbeddingRecord;

/// One exported row: provenance columns followed by numeric values.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub utterance_id: String,
    pub position: usize,
    pub grapheme: char,
    pub phoneme: String,
    pub values: Vec<f64>,
}

pub fn record_rows(records: &[EmbeddingRecord]) -> Vec<TableRow> {
    records
        .iter()
        .map(|r| TableRow {
            utterance_id: r.utterance_id.clone(),
            position: r.position,
            grapheme: r.grapheme,
            phoneme: r.label.clone(),
            values: r.vector.clone(),
        })
        .collect()
}

/// Rows carrying 2-D coordinates instead of embedding vectors.
pub fn point_rows(records: &[EmbeddingRecord], points: &Tensor) -> Vec<TableRow> {
    assert_eq!(records.len(), points.rows(), "one point per record");
    records
        .iter()
        .enumerate()
        .map(|(i, r)| TableRow {
            utterance_id: r.utterance_id.clone(),
            position: r.position,
            grapheme: r.grapheme,
            phoneme: r.label.clone(),
            values: points.row(i).to_vec(),
        })
        .collect()
}

/// Tab-separated text with a header row; values use 17 significant digits.
pub fn format_table(rows: &[TableRow], value_prefix: &str) -> String {
    let width = rows.first().map_or(0, |r| r.values.len());
    let mut out = String::from("utterance_id\tposition\tgrapheme\tphoneme");
    for k in 0..width {
        out.push_str(&format!("\t{value_prefix}{k}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}", r.utterance_id, r.position, r.grapheme, r.phoneme));
        for v in &r.values {
            out.push_str(&format!("\t{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn export_table(rows: &[TableRow], value_prefix: &str, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| AnalysisError::Io(format!("{}: {e}", path.display()));
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(format_table(rows, value_prefix).as_bytes()).map_err(io)
}

pub fn parse_table(text: &str) -> Result<Vec<TableRow>> {
    let bad = |line: usize, what: &str| AnalysisError::Io(format!("line {line}: {what}"));
    let mut lines = text.lines().enumerate();
    lines.next().ok_or_else(|| bad(1, "missing header"))?;
    lines
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 4 {
                return Err(bad(n + 1, "expected at least 4 fields"));
            }
            let mut chars = fields[2].chars();
            let grapheme = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(bad(n + 1, "grapheme must be one character")),
            };
            Ok(TableRow {
                utterance_id: fields[0].to_string(),
                position: fields[1].parse().map_err(|_| bad(n + 1, "bad position"))?,
                grapheme,
                phoneme: fields[3].to_string(),
                values: fields[4..]
                    .iter()
                    .map(|v| v.parse().map_err(|_| bad(n + 1, "bad value")))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn read_table(path: &Path) -> Result<Vec<TableRow>> {
    let text = fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
    parse_table(&text)
}
