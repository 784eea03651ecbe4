//! Whitespace/punctuation tokenizer with exact character offsets.

use crate::error::{Error, Result};
use crate::lcf::AspectSpan;

/// A token and its `[from, to)` character span in the original text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub char_from: usize,
    pub char_to: usize,
}

/// Lowercase and split on whitespace and punctuation boundaries. Every
/// alphanumeric run becomes one token; every other non-whitespace
/// character stands alone. Offsets index characters of the original
/// string, so concatenating the spans reconstructs exactly its
/// non-whitespace content.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            let text: String = chars[start..i].iter().flat_map(|c| c.to_lowercase()).collect();
            tokens.push(Token { text, char_from: start, char_to: i });
        } else {
            tokens.push(Token {
                text: c.to_lowercase().collect(),
                char_from: i,
                char_to: i + 1,
            });
            i += 1;
        }
    }
    tokens
}

/// Minimal token range whose character coverage contains the overlap with
/// `[char_from, char_to)`.
pub fn char_span_to_token_span(
    tokens: &[Token],
    char_from: usize,
    char_to: usize,
) -> Result<AspectSpan> {
    let mut first = None;
    let mut last = None;
    for (idx, tok) in tokens.iter().enumerate() {
        if tok.char_from < char_to && tok.char_to > char_from {
            if first.is_none() {
                first = Some(idx);
            }
            last = Some(idx);
        }
    }
    match (first, last) {
        (Some(a), Some(b)) => Ok(AspectSpan::new(a, b, char_from, char_to)),
        _ => Err(Error::Alignment { char_from, char_to }),
    }
}
