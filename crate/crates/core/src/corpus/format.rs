//! Corpus text format: one utterance per line,
//! `id<TAB>graphemes<TAB>space-separated phonemes<TAB>alignment`, where the
//! alignment is `i:j-k` (end exclusive) or `i:-` for silent graphemes.
//! Lines starting with `#` are comments. Splits are stored separately as
//! `id<TAB>split` lines.

use std::collections::HashMap;
use std::fmt::Write;

use super::{Corpus, CorpusError, Result, Split, Splits, Utterance};

pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::from("# id\tgraphemes\tphonemes\talignment\n");
    for u in &corpus.utterances {
        let text: String = u.graphemes.iter().collect();
        let align = match &u.alignment {
            Some(spans) => spans
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    if r.is_empty() {
                        format!("{i}:-")
                    } else {
                        format!("{i}:{}-{}", r.start, r.end)
                    }
                })
                .collect::<Vec<_>>()
                .join(" "),
            None => String::new(),
        };
        writeln!(out, "{}\t{}\t{}\t{}", u.id, text, u.phonemes.join(" "), align).unwrap();
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse { line, message: message.into() }
}

pub fn read_corpus(text: &str) -> Result<Corpus> {
    let mut utterances = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        let graphemes: Vec<char> = fields[1].chars().collect();
        let phonemes: Vec<String> = fields[2].split(' ').filter(|s| !s.is_empty()).map(str::to_string).collect();
        let alignment = if fields[3].is_empty() {
            None
        } else {
            let mut spans = Vec::with_capacity(graphemes.len());
            let mut covered = 0;
            for (expect, item) in fields[3].split(' ').enumerate() {
                let (idx, span) = item
                    .split_once(':')
                    .ok_or_else(|| parse_err(line_no, format!("bad alignment item {item:?}")))?;
                if idx.parse::<usize>().ok() != Some(expect) {
                    return Err(parse_err(line_no, format!("alignment index {idx} out of order")));
                }
                let range = if span == "-" {
                    covered..covered
                } else {
                    let (a, b) = span
                        .split_once('-')
                        .ok_or_else(|| parse_err(line_no, format!("bad span {span:?}")))?;
                    let a: usize = a.parse().map_err(|_| parse_err(line_no, format!("bad span {span:?}")))?;
                    let b: usize = b.parse().map_err(|_| parse_err(line_no, format!("bad span {span:?}")))?;
                    if a != covered || b <= a || b > phonemes.len() {
                        return Err(parse_err(line_no, format!("span {span} breaks phoneme coverage")));
                    }
                    a..b
                };
                covered = range.end;
                spans.push(range);
            }
            if spans.len() != graphemes.len() || covered != phonemes.len() {
                return Err(parse_err(line_no, "alignment does not cover the utterance"));
            }
            Some(spans)
        };
        utterances.push(Utterance {
            id: fields[0].to_string(),
            graphemes,
            phonemes,
            alignment,
        });
    }
    Ok(Corpus::new(utterances))
}

pub fn write_splits(corpus: &Corpus) -> String {
    let mut out = String::from("id\tsplit\n");
    if let Some(s) = &corpus.splits {
        let mut rows: Vec<(usize, Split)> = Split::ALL
            .iter()
            .flat_map(|&sp| s.get(sp).iter().map(move |&i| (i, sp)))
            .collect();
        rows.sort_unstable();
        for (i, sp) in rows {
            writeln!(out, "{}\t{}", corpus.utterances[i].id, sp).unwrap();
        }
    }
    out
}

/// Attach splits read from `text` to `corpus`.
pub fn read_splits(mut corpus: Corpus, text: &str) -> Result<Corpus> {
    let index: HashMap<&str, usize> = corpus
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| (u.id.as_str(), i))
        .collect();
    let mut splits = Splits::default();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, sp) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(n + 1, "expected id<TAB>split"))?;
        let i = *index
            .get(id)
            .ok_or_else(|| CorpusError::UnknownUtterance(id.to_string()))?;
        match sp.parse::<Split>().map_err(|e| parse_err(n + 1, e))? {
            Split::Train => splits.train.push(i),
            Split::Dev => splits.dev.push(i),
            Split::Test => splits.test.push(i),
        }
    }
    for v in [&mut splits.train, &mut splits.dev, &mut splits.test] {
        v.sort_unstable();
    }
    drop(index);
    corpus.splits = Some(splits);
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, split_corpus};

    #[test]
    fn round_trip() {
        let c = split_corpus(generate_corpus(50, 3), 5, 5, 2).unwrap();
        let text = write_corpus(&c);
        let back = read_corpus(&text).unwrap();
        assert_eq!(back.utterances, c.utterances);
        let back = read_splits(back, &write_splits(&c)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn alignment_syntax() {
        let c = read_corpus("# comment\nu1\tles.\tl e\t0:0-1 1:1-2 2:- 3:-\n").unwrap();
        assert_eq!(c.utterances[0].alignment.as_ref().unwrap()[2], 2..2);
        assert!(read_corpus("u1\tab\ta\t0:0-1 1:0-1\n").is_err());
        assert!(read_corpus("u1\tab\n").is_err());
    }
}
