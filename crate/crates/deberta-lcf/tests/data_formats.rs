//! Corpus-level properties of the parsers and the encoding pipeline,
//! exercised over the checked-in fixtures and the synthetic generator.

use deberta_lcf::data::{
    build_vocab, dataset_stats, encode_annotation, parse_semeval, parse_twitter, synthetic,
    write_semeval, write_twitter, RawAnnotation, RawPolarity,
};
use std::path::PathBuf;

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn all_fixture_annotations() -> Vec<RawAnnotation> {
    let mut out = parse_semeval(&fixture("laptop_mini.xml")).unwrap();
    out.extend(parse_semeval(&fixture("restaurant_mini.xml")).unwrap());
    out.extend(parse_twitter(&fixture("twitter_mini.txt")).unwrap());
    out
}

#[test]
fn fixture_offsets_satisfy_the_term_invariant() {
    for ann in all_fixture_annotations() {
        let chars: Vec<char> = ann.sentence.chars().collect();
        let slice: String = chars[ann.char_from..ann.char_to].iter().collect();
        assert_eq!(slice, ann.term, "{}", ann.sentence_id);
    }
}

#[test]
fn fixture_round_trips_are_lossless() {
    let laptop = parse_semeval(&fixture("laptop_mini.xml")).unwrap();
    assert_eq!(parse_semeval(&write_semeval(&laptop)).unwrap(), laptop);

    let twitter = parse_twitter(&fixture("twitter_mini.txt")).unwrap();
    assert_eq!(parse_twitter(&write_twitter(&twitter).unwrap()).unwrap(), twitter);
}

#[test]
fn span_decode_contains_the_aspect_across_whole_corpora() {
    let (synthetic_train, synthetic_test) = synthetic::restaurant_corpus(100, 40, 77);
    let mut corpora = all_fixture_annotations();
    corpora.extend(synthetic_train);
    corpora.extend(synthetic_test);

    let vocab = build_vocab(&corpora, 1);
    let mut retained = 0;
    for ann in &corpora {
        let Some(ex) = encode_annotation(ann, &vocab).unwrap() else {
            assert_eq!(ann.polarity, RawPolarity::Conflict);
            continue;
        };
        retained += 1;
        let decoded = vocab.decode(&ex.tokens[ex.span.token_start..=ex.span.token_end]);
        let normalize =
            |s: &str| s.to_lowercase().chars().filter(|c| !c.is_whitespace()).collect::<String>();
        let joined: String = decoded.join("");
        assert!(
            normalize(&joined).contains(&normalize(&ann.term)),
            "{}: span decode {joined:?} missing {:?}",
            ann.sentence_id,
            ann.term
        );
    }
    assert!(retained > 150, "expected a substantial corpus, got {retained}");
}

#[test]
fn fixture_label_counts_are_the_documented_ones() {
    let laptop = dataset_stats(&parse_semeval(&fixture("laptop_mini.xml")).unwrap());
    assert_eq!((laptop.positive, laptop.negative, laptop.neutral), (6, 4, 3));
    let rest = dataset_stats(&parse_semeval(&fixture("restaurant_mini.xml")).unwrap());
    assert_eq!((rest.positive, rest.negative, rest.neutral), (8, 3, 2));
    let tw = dataset_stats(&parse_twitter(&fixture("twitter_mini.txt")).unwrap());
    assert_eq!((tw.positive, tw.negative, tw.neutral), (4, 3, 5));
}
