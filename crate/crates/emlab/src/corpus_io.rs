//! Plain-text corpus files: one utterance per line, tokens as base-10
//! integers separated by single spaces, LF newlines, no trailing
//! whitespace. Lines starting with `#` are headers and are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use emlab_core::corpus::{Corpus, Token};

use crate::error::{io_err, Error, Result};

/// Error from [`parse_corpus`], with a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn parse_line(line: &str) -> std::result::Result<Vec<Token>, String> {
    if line.is_empty() {
        return Err("empty utterance".into());
    }
    if line.ends_with('\r') {
        return Err("CR before newline (expected LF line endings)".into());
    }
    line.split(' ')
        .map(|tok| {
            if tok.is_empty() {
                return Err("tokens must be separated by exactly one space".to_string());
            }
            if !tok.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("token {tok:?} is not a non-negative integer"));
            }
            tok.parse::<Token>().map_err(|_| format!("token {tok} does not fit in 32 bits"))
        })
        .collect()
}

pub fn parse_corpus(text: &str) -> std::result::Result<Corpus, ParseError> {
    let mut utts = Vec::new();
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Ok(Corpus::default());
    }
    for (i, line) in body.split('\n').enumerate() {
        if line.starts_with('#') {
            continue;
        }
        utts.push(parse_line(line).map_err(|msg| ParseError { line: i + 1, msg })?);
    }
    Corpus::new(utts).map_err(|e| ParseError { line: 0, msg: e.to_string() })
}

/// Canonical text: no headers, every utterance terminated by LF.
pub fn format_corpus(corpus: &Corpus) -> String {
    let mut out = String::with_capacity(corpus.n_tokens() * 4);
    for utt in corpus.utterances() {
        for (i, t) in utt.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{t}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_corpus(&text).map_err(|e| Error::Parse { path: path.into(), line: e.line, msg: e.msg })
}

/// Writes the canonical form, creating missing parent directories.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, format_corpus(corpus)).map_err(io_err(path))
}
