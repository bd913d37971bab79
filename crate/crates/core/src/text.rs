//! Deterministic normalization shared by every metric and by LM training.
//!
//! The rule is deliberately small: full Unicode lowercasing, the ASCII
//! punctuation characters `.,!?;:"()[]` become standalone tokens, and the rest
//! is split on whitespace runs.

use std::fmt;
use std::io::BufRead;

use thiserror::Error;

const SPLIT_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')', '[', ']'];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("input is empty after trimming whitespace")]
    EmptyInput,
    #[error("token {0:?} contains whitespace")]
    WhitespaceInToken(String),
    #[error("token {0:?} is not lowercase")]
    NotLowercase(String),
}

/// Normalized tokens of one sentence. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    /// Wraps already-normalized tokens, checking the sequence invariants.
    pub fn new(tokens: Vec<String>) -> Result<Self, TextError> {
        if tokens.is_empty() {
            return Err(TextError::EmptyInput);
        }
        for t in &tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(TextError::WhitespaceInToken(t.clone()));
            }
            if t.to_lowercase() != *t {
                return Err(TextError::NotLowercase(t.clone()));
            }
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Number of tokens (`|S|` in word space).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.tokens.iter()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

impl AsRef<[String]> for TokenSequence {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

/// Lowercases `raw`, splits off the fixed punctuation set and splits the
/// remainder on whitespace.
pub fn normalize(raw: &str) -> Result<TokenSequence, TextError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(TextError::EmptyInput);
    }
    let lowered = trimmed.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in lowered.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if SPLIT_PUNCTUATION.contains(&ch) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence::new(tokens)
}

/// Reads a corpus file (one sentence per line) and normalizes every
/// non-blank line.
pub fn read_corpus<R: BufRead>(reader: R) -> std::io::Result<Vec<TokenSequence>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        match normalize(&line) {
            Ok(seq) => out.push(seq),
            Err(TextError::EmptyInput) => continue,
            Err(e) => return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
        }
    }
    Ok(out)
}
