//! Dataset ingestion: benchmark file formats, tokenization, vocabulary,
//! example encoding, batching, and label statistics.

pub mod semeval;
pub mod synthetic;
pub mod tokenize;
pub mod twitter;
pub mod vocab;

pub use semeval::{parse_semeval, write_semeval};
pub use tokenize::{char_span_to_token_span, tokenize, Token};
pub use twitter::{parse_twitter, write_twitter};
pub use vocab::{Vocab, CLS_ID, PAD_ID, SEP_ID, UNK_ID};

use crate::error::{Error, Result};
use crate::lcf::AspectSpan;
use crate::rng::Rng;
use std::path::Path;

// ── Labels ───────────────────────────────────────────────────────────

/// Polarity as found in the raw files; `Conflict` exists only there and
/// is dropped before training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawPolarity {
    Positive,
    Negative,
    Neutral,
    Conflict,
}

impl RawPolarity {
    pub fn as_str(&self) -> &'static str {
        match self {
            RawPolarity::Positive => "positive",
            RawPolarity::Negative => "negative",
            RawPolarity::Neutral => "neutral",
            RawPolarity::Conflict => "conflict",
        }
    }
}

/// The three classification labels. The discriminants are the class
/// indices used by the model head and the metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn from_raw(raw: RawPolarity) -> Option<Polarity> {
        match raw {
            RawPolarity::Positive => Some(Polarity::Positive),
            RawPolarity::Negative => Some(Polarity::Negative),
            RawPolarity::Neutral => Some(Polarity::Neutral),
            RawPolarity::Conflict => None,
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Option<Polarity> {
        Polarity::ALL.get(i).copied()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Positive => "positive",
        }
    }
}

// ── Records and examples ─────────────────────────────────────────────

/// One aspect annotation exactly as parsed from a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub struct RawAnnotation {
    pub sentence_id: String,
    pub sentence: String,
    pub term: String,
    pub polarity: RawPolarity,
    pub char_from: usize,
    pub char_to: usize,
}

/// An encoded classification instance: sentence token ids, the aspect's
/// token span within them, and the label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub span: AspectSpan,
    pub label: Polarity,
}

/// Which on-disk dialect a dataset file uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Semeval,
    Twitter,
}

impl DatasetFormat {
    pub fn from_name(name: &str) -> Result<DatasetFormat> {
        match name {
            "semeval" => Ok(DatasetFormat::Semeval),
            "twitter" => Ok(DatasetFormat::Twitter),
            other => Err(Error::Config(format!(
                "unknown dataset format {other} (expected semeval or twitter)"
            ))),
        }
    }
}

/// Read and parse a dataset file.
pub fn load_annotations(path: &Path, format: DatasetFormat) -> Result<Vec<RawAnnotation>> {
    let text = std::fs::read_to_string(path)?;
    match format {
        DatasetFormat::Semeval => parse_semeval(&text),
        DatasetFormat::Twitter => parse_twitter(&text),
    }
}

/// Tokenize every sentence of the corpus and build the vocabulary.
pub fn build_vocab(annotations: &[RawAnnotation], min_count: usize) -> Vocab {
    let tokens: Vec<String> = annotations
        .iter()
        .flat_map(|a| tokenize(&a.sentence))
        .map(|t| t.text)
        .collect();
    Vocab::build(tokens.iter().map(String::as_str), min_count)
}

/// Encode one annotation. Conflict labels yield `None`; offset alignment
/// failures are errors.
pub fn encode_annotation(ann: &RawAnnotation, vocab: &Vocab) -> Result<Option<Example>> {
    let Some(label) = Polarity::from_raw(ann.polarity) else {
        return Ok(None);
    };
    let tokens = tokenize(&ann.sentence);
    let span = char_span_to_token_span(&tokens, ann.char_from, ann.char_to)?;
    let ids = vocab.encode(tokens.iter().map(|t| t.text.as_str()));
    Ok(Some(Example { tokens: ids, span, label }))
}

/// Encode a whole corpus, dropping conflict-labeled annotations.
pub fn encode_corpus(annotations: &[RawAnnotation], vocab: &Vocab) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(annotations.len());
    for ann in annotations {
        if let Some(ex) = encode_annotation(ann, vocab)? {
            out.push(ex);
        }
    }
    Ok(out)
}

// ── Statistics ───────────────────────────────────────────────────────

/// Label histogram over the three retained classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.neutral
    }
}

/// Count labels after dropping conflict annotations.
pub fn dataset_stats(annotations: &[RawAnnotation]) -> LabelCounts {
    let mut counts = LabelCounts::default();
    for ann in annotations {
        match ann.polarity {
            RawPolarity::Positive => counts.positive += 1,
            RawPolarity::Negative => counts.negative += 1,
            RawPolarity::Neutral => counts.neutral += 1,
            RawPolarity::Conflict => {}
        }
    }
    counts
}

// ── Batching ─────────────────────────────────────────────────────────

/// A padded batch of encoded examples. `tokens` holds the full model
/// input sequence per example (`[CLS] sentence [SEP] aspect [SEP]`),
/// right-padded to the batch width; spans stay sentence-relative.
#[derive(Clone, Debug)]
pub struct Batch {
    pub tokens: Vec<Vec<usize>>,
    pub pad_mask: Vec<Vec<f64>>,
    pub sentence_len: Vec<usize>,
    pub spans: Vec<AspectSpan>,
    pub labels: Vec<usize>,
    pub width: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// `[CLS] sentence [SEP] aspect-tokens [SEP]`.
pub fn global_sequence(ex: &Example) -> Vec<usize> {
    let mut seq = Vec::with_capacity(ex.tokens.len() + ex.span.token_len() + 3);
    seq.push(CLS_ID);
    seq.extend_from_slice(&ex.tokens);
    seq.push(SEP_ID);
    seq.extend_from_slice(&ex.tokens[ex.span.token_start..=ex.span.token_end]);
    seq.push(SEP_ID);
    seq
}

fn batch_from(examples: &[&Example]) -> Batch {
    let seqs: Vec<Vec<usize>> = examples.iter().map(|e| global_sequence(e)).collect();
    let width = seqs.iter().map(Vec::len).max().unwrap_or(0);
    let mut tokens = Vec::with_capacity(seqs.len());
    let mut pad_mask = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let mut mask = vec![1.0; seq.len()];
        mask.resize(width, 0.0);
        let mut padded = seq;
        padded.resize(width, PAD_ID);
        tokens.push(padded);
        pad_mask.push(mask);
    }
    Batch {
        tokens,
        pad_mask,
        sentence_len: examples.iter().map(|e| e.tokens.len()).collect(),
        spans: examples.iter().map(|e| e.span).collect(),
        labels: examples.iter().map(|e| e.label.index()).collect(),
        width,
    }
}

/// Shuffle with the given seed and split into right-padded batches.
pub fn make_batches(examples: &[Example], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            batch_from(&refs)
        })
        .collect()
}

/// One batch holding the given examples in order, without shuffling.
pub fn batch_of(examples: &[Example]) -> Batch {
    let refs: Vec<&Example> = examples.iter().collect();
    batch_from(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annotation(term: &str, sentence: &str, polarity: RawPolarity) -> RawAnnotation {
        let byte = sentence.find(term).unwrap();
        let from = sentence[..byte].chars().count();
        RawAnnotation {
            sentence_id: "t".into(),
            sentence: sentence.into(),
            term: term.into(),
            polarity,
            char_from: from,
            char_to: from + term.chars().count(),
        }
    }

    #[test]
    fn stats_count_and_drop_conflict() {
        let anns = vec![
            annotation("soup", "the soup was great", RawPolarity::Positive),
            annotation("wine", "the wine was great", RawPolarity::Positive),
            annotation("staff", "the staff was rude", RawPolarity::Negative),
            annotation("menu", "the menu was odd", RawPolarity::Conflict),
        ];
        let counts = dataset_stats(&anns);
        assert_eq!((counts.positive, counts.negative, counts.neutral), (2, 1, 0));
        assert_eq!(counts.total(), 3);
    }

    #[test]
    fn stats_of_empty_input_are_zero() {
        assert_eq!(dataset_stats(&[]).total(), 0);
    }

    #[test]
    fn conflict_examples_are_dropped_at_encoding() {
        let anns = vec![annotation("menu", "the menu was odd", RawPolarity::Conflict)];
        let vocab = build_vocab(&anns, 1);
        assert!(encode_annotation(&anns[0], &vocab).unwrap().is_none());
    }

    #[test]
    fn span_tokens_cover_the_aspect_term() {
        let anns = vec![
            annotation("battery life", "The battery life, it's great!", RawPolarity::Positive),
            annotation("don't", "i don't care", RawPolarity::Neutral),
        ];
        let vocab = build_vocab(&anns, 1);
        for ann in &anns {
            let ex = encode_annotation(ann, &vocab).unwrap().unwrap();
            let decoded = vocab.decode(&ex.tokens[ex.span.token_start..=ex.span.token_end]);
            let joined: String = decoded.join("").chars().filter(|c| !c.is_whitespace()).collect();
            let wanted: String = ann
                .term
                .to_lowercase()
                .chars()
                .filter(|c| !c.is_whitespace())
                .collect();
            assert!(
                joined.contains(&wanted),
                "span decode {joined:?} does not contain {wanted:?}"
            );
        }
    }

    #[test]
    fn global_sequence_layout() {
        let ex = Example {
            tokens: vec![10, 11, 12],
            span: AspectSpan::new(1, 2, 0, 0),
            label: Polarity::Positive,
        };
        assert_eq!(global_sequence(&ex), vec![CLS_ID, 10, 11, 12, SEP_ID, 11, 12, SEP_ID]);
    }

    #[test]
    fn equal_length_batch_has_no_padding() {
        let ex = Example {
            tokens: vec![5, 6],
            span: AspectSpan::new(0, 0, 0, 0),
            label: Polarity::Neutral,
        };
        let batch = batch_of(&[ex.clone(), ex]);
        assert_eq!(batch.width, 6);
        assert!(batch.pad_mask.iter().all(|m| m.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn mask_has_exactly_sequence_len_ones() {
        let short = Example {
            tokens: vec![5],
            span: AspectSpan::new(0, 0, 0, 0),
            label: Polarity::Negative,
        };
        let long = Example {
            tokens: vec![5, 6, 7, 8],
            span: AspectSpan::new(1, 2, 0, 0),
            label: Polarity::Positive,
        };
        let batch = batch_of(&[short.clone(), long.clone()]);
        let ones: Vec<usize> = batch
            .pad_mask
            .iter()
            .map(|m| m.iter().filter(|&&v| v == 1.0).count())
            .collect();
        assert_eq!(ones, vec![global_sequence(&short).len(), global_sequence(&long).len()]);
        assert_eq!(batch.width, global_sequence(&long).len());
    }

    #[test]
    fn same_seed_same_batch_order() {
        let examples: Vec<Example> = (0..17)
            .map(|i| Example {
                tokens: vec![4 + i],
                span: AspectSpan::new(0, 0, 0, 0),
                label: Polarity::Neutral,
            })
            .collect();
        let a = make_batches(&examples, 4, 99);
        let b = make_batches(&examples, 4, 99);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.tokens, y.tokens);
        }
    }
}
