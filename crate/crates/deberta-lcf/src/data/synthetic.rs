//! Deterministic synthetic review corpus.
//!
//! Stands in for the benchmark files when they are not on disk: sentences
//! pair each aspect with a nearby sentiment word, and dual-aspect
//! sentences carry two different polarities so locality actually matters.

use super::{RawAnnotation, RawPolarity};
use crate::rng::Rng;

const ASPECTS: &[&str] = &[
    "pasta", "pizza", "service", "staff", "wine", "dessert", "menu", "coffee", "salad", "soup",
    "steak", "bread", "waiter", "ambience", "decor", "risotto", "cocktails", "tea", "cake",
    "lighting",
];

const POSITIVE_WORDS: &[&str] = &[
    "delicious", "excellent", "wonderful", "fantastic", "amazing", "superb", "lovely", "tasty",
    "delightful", "outstanding",
];

const NEGATIVE_WORDS: &[&str] = &[
    "awful", "terrible", "horrible", "bland", "disgusting", "rude", "overpriced", "stale",
    "soggy", "dreadful",
];

const NEUTRAL_WORDS: &[&str] = &[
    "average", "ordinary", "acceptable", "standard", "typical", "unremarkable", "plain",
    "passable",
];

const OPENERS: &[&str] = &["", "last night ", "on friday ", "honestly ", "for the price "];

fn word_for(polarity: RawPolarity, rng: &mut Rng) -> &'static str {
    let list = match polarity {
        RawPolarity::Positive => POSITIVE_WORDS,
        RawPolarity::Negative => NEGATIVE_WORDS,
        RawPolarity::Neutral => NEUTRAL_WORDS,
        RawPolarity::Conflict => unreachable!("generator never emits conflict"),
    };
    list[rng.below(list.len())]
}

struct SentenceBuilder {
    text: String,
    chars: usize,
}

impl SentenceBuilder {
    fn new() -> SentenceBuilder {
        SentenceBuilder { text: String::new(), chars: 0 }
    }

    fn push(&mut self, part: &str) {
        self.text.push_str(part);
        self.chars += part.chars().count();
    }

    /// Append an aspect term, returning its `[from, to)` char offsets.
    fn push_aspect(&mut self, term: &str) -> (usize, usize) {
        let from = self.chars;
        self.push(term);
        (from, self.chars)
    }
}

/// Positive-heavy label stream: positive, positive, negative, neutral.
fn polarity_cycle(i: usize) -> RawPolarity {
    match i % 4 {
        0 | 1 => RawPolarity::Positive,
        2 => RawPolarity::Negative,
        _ => RawPolarity::Neutral,
    }
}

fn generate(count: usize, rng: &mut Rng, id_prefix: &str, label_counter: &mut usize) -> Vec<RawAnnotation> {
    let mut out: Vec<RawAnnotation> = Vec::with_capacity(count);
    let mut sentence_no = 0;
    while out.len() < count {
        let remaining = count - out.len();
        let dual = remaining >= 2 && rng.below(3) == 0;
        let id = format!("{id_prefix}{sentence_no}");
        sentence_no += 1;

        let aspect_a = ASPECTS[rng.below(ASPECTS.len())];
        let pol_a = polarity_cycle(*label_counter);
        *label_counter += 1;
        let word_a = word_for(pol_a, rng);
        let opener = OPENERS[rng.below(OPENERS.len())];

        let mut b = SentenceBuilder::new();
        b.push(opener);
        if dual {
            let mut aspect_b = ASPECTS[rng.below(ASPECTS.len())];
            while aspect_b == aspect_a {
                aspect_b = ASPECTS[rng.below(ASPECTS.len())];
            }
            let pol_b = polarity_cycle(*label_counter);
            *label_counter += 1;
            let word_b = word_for(pol_b, rng);

            b.push("the ");
            let (a_from, a_to) = b.push_aspect(aspect_a);
            b.push(" was ");
            b.push(word_a);
            b.push(" but the ");
            let (b_from, b_to) = b.push_aspect(aspect_b);
            b.push(" seemed ");
            b.push(word_b);
            b.push(" to us.");

            out.push(RawAnnotation {
                sentence_id: id.clone(),
                sentence: b.text.clone(),
                term: aspect_a.to_string(),
                polarity: pol_a,
                char_from: a_from,
                char_to: a_to,
            });
            out.push(RawAnnotation {
                sentence_id: id,
                sentence: b.text,
                term: aspect_b.to_string(),
                polarity: pol_b,
                char_from: b_from,
                char_to: b_to,
            });
        } else {
            let (from, to) = match rng.below(3) {
                0 => {
                    b.push("the ");
                    let span = b.push_aspect(aspect_a);
                    b.push(" was ");
                    b.push(word_a);
                    b.push(" tonight.");
                    span
                }
                1 => {
                    b.push("we thought the ");
                    let span = b.push_aspect(aspect_a);
                    b.push(" was really ");
                    b.push(word_a);
                    b.push(".");
                    span
                }
                _ => {
                    b.push("i found the ");
                    let span = b.push_aspect(aspect_a);
                    b.push(" rather ");
                    b.push(word_a);
                    b.push(" overall.");
                    span
                }
            };
            out.push(RawAnnotation {
                sentence_id: id,
                sentence: b.text,
                term: aspect_a.to_string(),
                polarity: pol_a,
                char_from: from,
                char_to: to,
            });
        }
    }
    out.truncate(count);
    out
}

/// Restaurant-flavored train/test pair. Fully determined by the seed and
/// the sizes; the label distribution is positive-heavy (about 2:1:1).
pub fn restaurant_corpus(
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> (Vec<RawAnnotation>, Vec<RawAnnotation>) {
    let mut rng = Rng::new(seed);
    let mut labels = 0;
    let train = generate(n_train, &mut rng, "train", &mut labels);
    let test = generate(n_test, &mut rng, "test", &mut labels);
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{dataset_stats, parse_semeval, write_semeval};

    #[test]
    fn generator_is_deterministic() {
        let (a_train, a_test) = restaurant_corpus(40, 10, 7);
        let (b_train, b_test) = restaurant_corpus(40, 10, 7);
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
    }

    #[test]
    fn offsets_are_exact() {
        let (train, test) = restaurant_corpus(60, 20, 3);
        for ann in train.iter().chain(&test) {
            let chars: Vec<char> = ann.sentence.chars().collect();
            let slice: String = chars[ann.char_from..ann.char_to].iter().collect();
            assert_eq!(slice, ann.term);
        }
    }

    #[test]
    fn corpus_survives_xml_round_trip() {
        let (train, _) = restaurant_corpus(30, 0, 11);
        let xml = write_semeval(&train);
        let reparsed = parse_semeval(&xml).unwrap();
        assert_eq!(train, reparsed);
    }

    #[test]
    fn label_distribution_is_positive_heavy() {
        let (train, _) = restaurant_corpus(200, 0, 1);
        let counts = dataset_stats(&train);
        assert_eq!(counts.total(), 200);
        assert!(counts.positive > counts.negative);
        assert!(counts.positive > counts.neutral);
        assert!(counts.negative > 0 && counts.neutral > 0);
    }
}
