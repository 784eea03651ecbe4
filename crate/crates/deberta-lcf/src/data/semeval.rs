//! Reader and writer for the SemEval-2014 aspect-term XML format.
//!
//! The reader is a small pull scanner specialized to this schema:
//! `sentence` elements carrying a `text` child and `aspectTerm` children
//! with `term`, `polarity`, `from`, `to` attributes. Unknown elements
//! (for example aspect categories) are skipped. Offsets are 0-based
//! character indices with exclusive end.

use super::{RawAnnotation, RawPolarity};
use crate::error::{Error, Result};

// ── Scanner ──────────────────────────────────────────────────────────

#[derive(Debug)]
enum Event {
    Start { name: String, attrs: Vec<(String, String)>, self_closing: bool },
    End { name: String },
    Text(String),
    Eof,
}

struct Scanner {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Scanner {
    fn new(text: &str) -> Scanner {
        Scanner { chars: text.chars().collect(), pos: 0, line: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied();
        if let Some(ch) = c {
            if ch == '\n' {
                self.line += 1;
            }
            self.pos += 1;
        }
        c
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.bump() {
            Some(got) if got == c => Ok(()),
            Some(got) => Err(self.fail(format!("expected '{c}', found '{got}'"))),
            None => Err(self.fail(format!("expected '{c}', found end of input"))),
        }
    }

    fn skip_whitespace(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn read_name(&mut self) -> Result<String> {
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '-' || c == ':' || c == '.' {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if name.is_empty() {
            return Err(self.fail("expected a name"));
        }
        Ok(name)
    }

    /// Consume until the given terminator string has been read.
    fn skip_until(&mut self, terminator: &str) -> Result<()> {
        let term: Vec<char> = terminator.chars().collect();
        let mut matched = 0;
        while let Some(c) = self.bump() {
            if c == term[matched] {
                matched += 1;
                if matched == term.len() {
                    return Ok(());
                }
            } else {
                matched = if c == term[0] { 1 } else { 0 };
            }
        }
        Err(self.fail(format!("unterminated construct, expected {terminator}")))
    }

    fn next_event(&mut self) -> Result<Event> {
        loop {
            let Some(c) = self.peek() else { return Ok(Event::Eof) };
            if c == '<' {
                self.bump();
                match self.peek() {
                    Some('?') => {
                        self.skip_until("?>")?;
                    }
                    Some('!') => {
                        self.bump();
                        if self.peek() == Some('-') {
                            self.skip_until("-->")?;
                        } else {
                            self.skip_until(">")?; // doctype and friends
                        }
                    }
                    Some('/') => {
                        self.bump();
                        let name = self.read_name()?;
                        self.skip_whitespace();
                        self.expect('>')?;
                        return Ok(Event::End { name });
                    }
                    _ => return self.read_start_tag(),
                }
            } else {
                let mut text = String::new();
                while let Some(c) = self.peek() {
                    if c == '<' {
                        break;
                    }
                    self.bump();
                    if c == '&' {
                        text.push(self.read_entity()?);
                    } else {
                        text.push(c);
                    }
                }
                if text.chars().any(|c| !c.is_whitespace()) {
                    return Ok(Event::Text(text));
                }
                // whitespace between tags: keep scanning
            }
        }
    }

    fn read_start_tag(&mut self) -> Result<Event> {
        let name = self.read_name()?;
        let mut attrs = Vec::new();
        loop {
            self.skip_whitespace();
            match self.peek() {
                Some('>') => {
                    self.bump();
                    return Ok(Event::Start { name, attrs, self_closing: false });
                }
                Some('/') => {
                    self.bump();
                    self.expect('>')?;
                    return Ok(Event::Start { name, attrs, self_closing: true });
                }
                Some(_) => {
                    let key = self.read_name()?;
                    self.skip_whitespace();
                    self.expect('=')?;
                    self.skip_whitespace();
                    let quote = match self.bump() {
                        Some(q @ ('"' | '\'')) => q,
                        _ => return Err(self.fail("expected a quoted attribute value")),
                    };
                    let mut value = String::new();
                    loop {
                        match self.bump() {
                            Some(c) if c == quote => break,
                            Some('&') => value.push(self.read_entity()?),
                            Some(c) => value.push(c),
                            None => return Err(self.fail("unterminated attribute value")),
                        }
                    }
                    attrs.push((key, value));
                }
                None => return Err(self.fail("unterminated tag")),
            }
        }
    }

    /// The '&' has already been consumed.
    fn read_entity(&mut self) -> Result<char> {
        let mut body = String::new();
        loop {
            match self.bump() {
                Some(';') => break,
                Some(c) if body.len() < 12 => body.push(c),
                _ => return Err(self.fail("malformed entity reference")),
            }
        }
        match body.as_str() {
            "amp" => Ok('&'),
            "lt" => Ok('<'),
            "gt" => Ok('>'),
            "quot" => Ok('"'),
            "apos" => Ok('\''),
            _ => {
                let code = if let Some(hex) = body.strip_prefix("#x") {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = body.strip_prefix('#') {
                    dec.parse().ok()
                } else {
                    None
                };
                code.and_then(char::from_u32)
                    .ok_or_else(|| self.fail(format!("unknown entity &{body};")))
            }
        }
    }
}

// ── Parser ───────────────────────────────────────────────────────────

struct PendingAspect {
    term: String,
    polarity: RawPolarity,
    from: usize,
    to: usize,
    line: usize,
}

/// Parse a SemEval aspect-term document into one record per aspect term.
/// The `sentence[from..to] == term` invariant is verified for every
/// record; sentences without aspect terms contribute nothing.
pub fn parse_semeval(xml: &str) -> Result<Vec<RawAnnotation>> {
    let mut sc = Scanner::new(xml);
    let mut records = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut sentence_id = String::new();
    let mut sentence_text: Option<String> = None;
    let mut pending: Vec<PendingAspect> = Vec::new();

    loop {
        let line_before = sc.line;
        match sc.next_event()? {
            Event::Eof => {
                if !stack.is_empty() {
                    return Err(Error::Parse {
                        line: sc.line,
                        msg: format!("unclosed element {}", stack.last().unwrap()),
                    });
                }
                return Ok(records);
            }
            Event::Start { name, attrs, self_closing } => {
                match name.as_str() {
                    "sentence" => {
                        sentence_id = attrs
                            .iter()
                            .find(|(k, _)| k == "id")
                            .map(|(_, v)| v.clone())
                            .unwrap_or_default();
                        sentence_text = None;
                        pending.clear();
                    }
                    "aspectTerm" if stack.iter().any(|s| s == "sentence") => {
                        let get = |key: &str| -> Result<String> {
                            attrs
                                .iter()
                                .find(|(k, _)| k == key)
                                .map(|(_, v)| v.clone())
                                .ok_or(Error::Parse {
                                    line: line_before,
                                    msg: format!("aspectTerm is missing the {key} attribute"),
                                })
                        };
                        let term = get("term")?;
                        let polarity = parse_polarity(&get("polarity")?, line_before)?;
                        let from = parse_offset(&get("from")?, line_before)?;
                        let to = parse_offset(&get("to")?, line_before)?;
                        pending.push(PendingAspect { term, polarity, from, to, line: line_before });
                    }
                    _ => {}
                }
                if !self_closing {
                    stack.push(name);
                }
            }
            Event::Text(text) => {
                if stack.last().map(String::as_str) == Some("text")
                    && stack.iter().any(|s| s == "sentence")
                {
                    sentence_text = Some(match sentence_text.take() {
                        None => text,
                        Some(prev) => prev + &text,
                    });
                }
            }
            Event::End { name } => {
                match stack.pop() {
                    Some(open) if open == name => {}
                    Some(open) => {
                        return Err(Error::Parse {
                            line: sc.line,
                            msg: format!("mismatched close tag </{name}> for <{open}>"),
                        })
                    }
                    None => {
                        return Err(Error::Parse {
                            line: sc.line,
                            msg: format!("close tag </{name}> without an open element"),
                        })
                    }
                }
                if name == "sentence" {
                    let text = sentence_text.take().unwrap_or_default();
                    for aspect in pending.drain(..) {
                        records.push(check_aspect(&sentence_id, &text, aspect)?);
                    }
                }
            }
        }
    }
}

fn parse_polarity(value: &str, line: usize) -> Result<RawPolarity> {
    match value {
        "positive" => Ok(RawPolarity::Positive),
        "negative" => Ok(RawPolarity::Negative),
        "neutral" => Ok(RawPolarity::Neutral),
        "conflict" => Ok(RawPolarity::Conflict),
        other => Err(Error::Parse { line, msg: format!("unknown polarity {other}") }),
    }
}

fn parse_offset(value: &str, line: usize) -> Result<usize> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("offset {value} is not a nonnegative integer"),
    })
}

fn check_aspect(sentence_id: &str, sentence: &str, aspect: PendingAspect) -> Result<RawAnnotation> {
    let chars: Vec<char> = sentence.chars().collect();
    if aspect.from > aspect.to || aspect.to > chars.len() {
        return Err(Error::Integrity {
            sentence_id: sentence_id.to_string(),
            msg: format!(
                "offsets [{}, {}) exceed sentence length {}",
                aspect.from,
                aspect.to,
                chars.len()
            ),
        });
    }
    let substring: String = chars[aspect.from..aspect.to].iter().collect();
    if substring != aspect.term {
        return Err(Error::Integrity {
            sentence_id: sentence_id.to_string(),
            msg: format!(
                "term {:?} does not match sentence[{}..{}) = {:?} (line {})",
                aspect.term, aspect.from, aspect.to, substring, aspect.line
            ),
        });
    }
    Ok(RawAnnotation {
        sentence_id: sentence_id.to_string(),
        sentence: sentence.to_string(),
        term: aspect.term,
        polarity: aspect.polarity,
        char_from: aspect.from,
        char_to: aspect.to,
    })
}

// ── Writer ───────────────────────────────────────────────────────────

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

/// Serialize records back to the same XML dialect; consecutive records
/// sharing a sentence id and text are grouped under one sentence element.
pub fn write_semeval(records: &[RawAnnotation]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<sentences>\n");
    let mut i = 0;
    while i < records.len() {
        let mut j = i + 1;
        while j < records.len()
            && records[j].sentence_id == records[i].sentence_id
            && records[j].sentence == records[i].sentence
        {
            j += 1;
        }
        out.push_str(&format!(
            "    <sentence id=\"{}\">\n        <text>{}</text>\n        <aspectTerms>\n",
            escape_attr(&records[i].sentence_id),
            escape_text(&records[i].sentence)
        ));
        for rec in &records[i..j] {
            out.push_str(&format!(
                "            <aspectTerm term=\"{}\" polarity=\"{}\" from=\"{}\" to=\"{}\"/>\n",
                escape_attr(&rec.term),
                rec.polarity.as_str(),
                rec.char_from,
                rec.char_to
            ));
        }
        out.push_str("        </aspectTerms>\n    </sentence>\n");
        i = j;
    }
    out.push_str("</sentences>\n");
    out
}
