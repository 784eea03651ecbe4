//! Token vocabulary with four fixed reserved entries.

use crate::error::{Error, Result};
use std::collections::HashMap;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Dense token-to-id table. Ids 0..=3 are reserved; content tokens follow
/// in frequency-descending, then lexicographic, order so the mapping is a
/// pure function of the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    /// Build from an iterator of token strings, keeping tokens that occur
    /// at least `min_count` times.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, min_count: usize) -> Vocab {
        assert!(min_count >= 1);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tok in corpus {
            *counts.entry(tok).or_insert(0) += 1;
        }
        let mut entries: Vec<(&str, usize)> =
            counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(entries.into_iter().map(|(t, _)| t.to_string()));
        Vocab::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved entries are always present
    }

    /// Id of a token; unknown tokens map to `[UNK]`.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// One token per line, the four reserved names first; the line index
    /// is the id.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Vocab> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 4 {
            return Err(Error::Format {
                record: 0,
                msg: "vocabulary file is missing the reserved entries".into(),
            });
        }
        for (i, name) in RESERVED.iter().enumerate() {
            if lines[i] != *name {
                return Err(Error::Format {
                    record: i,
                    msg: format!("expected reserved token {name}, found {}", lines[i]),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, line) in lines.iter().enumerate() {
            if !seen.insert(*line) {
                return Err(Error::Format {
                    record: i,
                    msg: format!("duplicate vocabulary entry {line}"),
                });
            }
        }
        Ok(Vocab::from_tokens(lines.into_iter().map(String::from).collect()))
    }
}
