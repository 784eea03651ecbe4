//! Reader and writer for the three-line target-sentiment format used by
//! the Twitter benchmark: sentence with a `$T$` placeholder, target
//! string, then a label in {-1, 0, 1}.

use super::{RawAnnotation, RawPolarity};
use crate::error::{Error, Result};

pub const PLACEHOLDER: &str = "$T$";

/// Parse records of exactly three lines each. The placeholder is replaced
/// by the target and the character offsets are taken from its position.
/// Labels map -1 to negative, 0 to neutral, 1 to positive.
pub fn parse_twitter(text: &str) -> Result<Vec<RawAnnotation>> {
    let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if !lines.len().is_multiple_of(3) {
        return Err(Error::Format {
            record: lines.len() / 3,
            msg: format!("line count {} is not a multiple of 3", lines.len()),
        });
    }
    let mut records = Vec::with_capacity(lines.len() / 3);
    for (idx, chunk) in lines.chunks(3).enumerate() {
        let template = chunk[0].trim();
        let target = chunk[1].trim();
        let label = chunk[2].trim();

        let Some(byte_pos) = template.find(PLACEHOLDER) else {
            return Err(Error::Format {
                record: idx,
                msg: format!("sentence has no {PLACEHOLDER} placeholder"),
            });
        };
        let polarity = match label {
            "-1" => RawPolarity::Negative,
            "0" => RawPolarity::Neutral,
            "1" => RawPolarity::Positive,
            other => {
                return Err(Error::Format {
                    record: idx,
                    msg: format!("label {other} is not one of -1, 0, 1"),
                })
            }
        };
        let char_from = template[..byte_pos].chars().count();
        let char_to = char_from + target.chars().count();
        let sentence = template.replacen(PLACEHOLDER, target, 1);
        records.push(RawAnnotation {
            sentence_id: idx.to_string(),
            sentence,
            term: target.to_string(),
            polarity,
            char_from,
            char_to,
        });
    }
    Ok(records)
}

/// Serialize records back to the three-line format. Conflict labels have
/// no representation here and are rejected.
pub fn write_twitter(records: &[RawAnnotation]) -> Result<String> {
    let mut out = String::new();
    for (idx, rec) in records.iter().enumerate() {
        let label = match rec.polarity {
            RawPolarity::Negative => "-1",
            RawPolarity::Neutral => "0",
            RawPolarity::Positive => "1",
            RawPolarity::Conflict => {
                return Err(Error::Format {
                    record: idx,
                    msg: "conflict labels cannot be written in this format".into(),
                })
            }
        };
        let chars: Vec<char> = rec.sentence.chars().collect();
        let before: String = chars[..rec.char_from].iter().collect();
        let after: String = chars[rec.char_to..].iter().collect();
        out.push_str(&before);
        out.push_str(PLACEHOLDER);
        out.push_str(&after);
        out.push('\n');
        out.push_str(&rec.term);
        out.push('\n');
        out.push_str(label);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_record_is_positive_with_placeholder_offsets() {
        let recs = parse_twitter("i love $T$ so much\nthe pixel\n1\n").unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.sentence, "i love the pixel so much");
        assert_eq!(r.term, "the pixel");
        assert_eq!(r.polarity, RawPolarity::Positive);
        assert_eq!((r.char_from, r.char_to), (7, 16));
        let slice: String = r.sentence.chars().skip(r.char_from).take(r.char_to - r.char_from).collect();
        assert_eq!(slice, "the pixel");
    }

    #[test]
    fn bad_label_is_a_format_error() {
        let err = parse_twitter("nice $T$\nphone\n2\n").unwrap_err();
        match err {
            Error::Format { record, .. } => assert_eq!(record, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_placeholder_is_a_format_error() {
        assert!(matches!(
            parse_twitter("no marker here\nphone\n1\n"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn ragged_line_count_is_a_format_error() {
        let err = parse_twitter("a $T$ b\ntarget\n1\nleftover line\n").unwrap_err();
        assert!(matches!(err, Error::Format { record: 1, .. }));
    }

    #[test]
    fn label_map_covers_all_three() {
        let text = "x $T$\na\n-1\ny $T$\nb\n0\nz $T$\nc\n1\n";
        let recs = parse_twitter(text).unwrap();
        assert_eq!(recs[0].polarity, RawPolarity::Negative);
        assert_eq!(recs[1].polarity, RawPolarity::Neutral);
        assert_eq!(recs[2].polarity, RawPolarity::Positive);
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = "i love $T$ so much\nthe pixel\n1\nthe $T$ died again\nbattery\n-1\n";
        let recs = parse_twitter(text).unwrap();
        let rewritten = write_twitter(&recs).unwrap();
        assert_eq!(rewritten, text);
        assert_eq!(parse_twitter(&rewritten).unwrap(), recs);
    }
}
