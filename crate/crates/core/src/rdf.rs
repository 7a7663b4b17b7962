//! NTriples parsing and per-subject capsule grouping.
//!
//! The parser accepts the line-oriented subset of N-Triples: IRIs in angle
//! brackets, quoted literals with an optional `^^<datatype>` or `@lang`
//! suffix, blank nodes (`_:label`), `#` comments and blank lines. Parsing is
//! strict: the first malformed line aborts with its 1-based line number.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NTriplesError {
    #[error("line {line_number}: {reason}")]
    MalformedLine { line_number: usize, reason: String },
    #[error("failed to read input: {0}")]
    Io(String),
}

/// An RDF term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Term {
    Iri {
        lexical: String,
    },
    BlankNode {
        lexical: String,
    },
    Literal {
        lexical: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        language: Option<String>,
    },
}

impl Term {
    pub fn iri(value: impl Into<String>) -> Self {
        Term::Iri {
            lexical: value.into(),
        }
    }

    pub fn blank(label: impl Into<String>) -> Self {
        Term::BlankNode {
            lexical: label.into(),
        }
    }

    pub fn literal(value: impl Into<String>) -> Self {
        Term::Literal {
            lexical: value.into(),
            datatype: None,
            language: None,
        }
    }

    pub fn typed_literal(value: impl Into<String>, datatype: impl Into<String>) -> Self {
        Term::Literal {
            lexical: value.into(),
            datatype: Some(datatype.into()),
            language: None,
        }
    }

    pub fn lang_literal(value: impl Into<String>, language: impl Into<String>) -> Self {
        Term::Literal {
            lexical: value.into(),
            datatype: None,
            language: Some(language.into()),
        }
    }

    pub fn lexical(&self) -> &str {
        match self {
            Term::Iri { lexical } | Term::BlankNode { lexical } | Term::Literal { lexical, .. } => {
                lexical
            }
        }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri { .. })
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Term::BlankNode { .. })
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri { lexical } => Some(lexical),
            _ => None,
        }
    }
}

/// Canonical N-Triples rendering.
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri { lexical } => write_iri(f, lexical),
            Term::BlankNode { lexical } => write!(f, "_:{lexical}"),
            Term::Literal {
                lexical,
                datatype,
                language,
            } => {
                f.write_str("\"")?;
                for c in lexical.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
                if let Some(dt) = datatype {
                    f.write_str("^^")?;
                    write_iri(f, dt)?;
                } else if let Some(lang) = language {
                    write!(f, "@{lang}")?;
                }
                Ok(())
            }
        }
    }
}

fn write_iri(f: &mut fmt::Formatter<'_>, iri: &str) -> fmt::Result {
    f.write_str("<")?;
    for c in iri.chars() {
        if c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') {
            write!(f, "\\u{:04X}", c as u32)?;
        } else {
            write!(f, "{c}")?;
        }
    }
    f.write_str(">")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    /// Builds a triple, checking the positional term restrictions.
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, String> {
        if subject.is_literal() {
            return Err("subject must be an IRI or blank node".into());
        }
        if !predicate.is_iri() {
            return Err("predicate must be an IRI".into());
        }
        Ok(Triple {
            subject,
            predicate,
            object,
        })
    }

    pub fn predicate_iri(&self) -> &str {
        self.predicate.lexical()
    }

    pub fn to_ntriples(&self) -> String {
        format!("{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// All triples that share one subject, in input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCapsule {
    pub subject: Term,
    pub triples: Vec<Triple>,
}

pub fn parse_ntriples<R: Read>(mut input: R) -> Result<Vec<Triple>, NTriplesError> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| NTriplesError::Io(e.to_string()))?;
    let text = match std::str::from_utf8(&bytes) {
        Ok(text) => text,
        Err(e) => {
            let line_number = bytes[..e.valid_up_to()]
                .iter()
                .filter(|&&b| b == b'\n')
                .count()
                + 1;
            return Err(NTriplesError::MalformedLine {
                line_number,
                reason: "invalid UTF-8".into(),
            });
        }
    };
    parse_ntriples_str(text)
}

pub fn parse_ntriples_str(text: &str) -> Result<Vec<Triple>, NTriplesError> {
    let mut triples = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let mut cursor = LineCursor::new(line);
        match cursor.statement() {
            Ok(Some(triple)) => triples.push(triple),
            Ok(None) => {}
            Err(reason) => {
                return Err(NTriplesError::MalformedLine {
                    line_number: idx + 1,
                    reason,
                })
            }
        }
    }
    Ok(triples)
}

struct LineCursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> LineCursor<'a> {
    fn new(src: &'a str) -> Self {
        LineCursor { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.pos += 1;
        }
    }

    fn at_end_or_comment(&mut self) -> bool {
        self.skip_ws();
        matches!(self.peek(), None | Some('#'))
    }

    fn statement(&mut self) -> Result<Option<Triple>, String> {
        if self.at_end_or_comment() {
            return Ok(None);
        }
        let subject = match self.peek() {
            Some('<') => self.iri()?,
            Some('_') => self.blank_node()?,
            _ => return Err(format!("expected subject IRI or blank node at column {}", self.pos + 1)),
        };
        self.skip_ws();
        let predicate = match self.peek() {
            Some('<') => self.iri()?,
            _ => return Err(format!("expected predicate IRI at column {}", self.pos + 1)),
        };
        self.skip_ws();
        let object = match self.peek() {
            Some('<') => self.iri()?,
            Some('_') => self.blank_node()?,
            Some('"') => self.literal()?,
            _ => return Err(format!("expected object term at column {}", self.pos + 1)),
        };
        self.skip_ws();
        if self.bump() != Some('.') {
            return Err("missing '.' terminator".into());
        }
        if !self.at_end_or_comment() {
            return Err(format!("unexpected content after '.' at column {}", self.pos + 1));
        }
        Ok(Some(Triple {
            subject,
            predicate,
            object,
        }))
    }

    fn iri(&mut self) -> Result<Term, String> {
        self.bump(); // '<'
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err("unterminated IRI".into()),
                Some('>') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        _ => return Err("invalid escape in IRI".into()),
                    };
                    out.push(c);
                }
                Some(c) if c <= ' ' || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`') => {
                    return Err(format!("character {c:?} not allowed in IRI"));
                }
                Some(c) => out.push(c),
            }
        }
        if out.is_empty() {
            return Err("empty IRI".into());
        }
        Ok(Term::Iri { lexical: out })
    }

    fn blank_node(&mut self) -> Result<Term, String> {
        if !self.rest().starts_with("_:") {
            return Err("expected '_:' blank node prefix".into());
        }
        self.pos += 2;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | '.') {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        // A trailing '.' belongs to the statement terminator.
        while self.pos > start && self.src[..self.pos].ends_with('.') {
            self.pos -= 1;
        }
        if self.pos == start {
            return Err("empty blank node label".into());
        }
        Ok(Term::BlankNode {
            lexical: self.src[start..self.pos].to_string(),
        })
    }

    fn literal(&mut self) -> Result<Term, String> {
        self.bump(); // '"'
        let mut lexical = String::new();
        loop {
            match self.bump() {
                None => return Err("unterminated literal".into()),
                Some('"') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        Some(c) => return Err(format!("invalid escape sequence '\\{c}'")),
                        None => return Err("dangling escape at end of line".into()),
                    };
                    lexical.push(c);
                }
                Some(c) => lexical.push(c),
            }
        }
        if self.rest().starts_with("^^") {
            self.pos += 2;
            if self.peek() != Some('<') {
                return Err("datatype must be an IRI".into());
            }
            let datatype = self.iri()?.lexical().to_string();
            return Ok(Term::Literal {
                lexical,
                datatype: Some(datatype),
                language: None,
            });
        }
        if self.peek() == Some('@') {
            self.bump();
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '-' {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let tag = &self.src[start..self.pos];
            let valid = !tag.is_empty()
                && tag.split('-').enumerate().all(|(i, part)| {
                    !part.is_empty()
                        && (i > 0 || part.chars().all(|c| c.is_ascii_alphabetic()))
                });
            if !valid {
                return Err(format!("invalid language tag '{tag}'"));
            }
            return Ok(Term::Literal {
                lexical,
                datatype: None,
                language: Some(tag.to_string()),
            });
        }
        Ok(Term::Literal {
            lexical,
            datatype: None,
            language: None,
        })
    }

    fn hex_escape(&mut self, digits: usize) -> Result<char, String> {
        let rest = self.rest();
        if rest.len() < digits || !rest[..digits].chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(format!("expected {digits} hex digits in escape"));
        }
        let code = u32::from_str_radix(&rest[..digits], 16).map_err(|e| e.to_string())?;
        self.pos += digits;
        char::from_u32(code).ok_or_else(|| format!("invalid code point U+{code:X}"))
    }
}

/// Groups triples by subject. Capsules appear in first-appearance order of
/// their subject; triples keep input order within a capsule.
pub fn group_capsules(triples: &[Triple]) -> Vec<EntityCapsule> {
    let mut index: HashMap<&Term, usize> = HashMap::new();
    let mut capsules: Vec<EntityCapsule> = Vec::new();
    for triple in triples {
        let slot = *index.entry(&triple.subject).or_insert_with(|| {
            capsules.push(EntityCapsule {
                subject: triple.subject.clone(),
                triples: Vec::new(),
            });
            capsules.len() - 1
        });
        capsules[slot].triples.push(triple.clone());
    }
    capsules
}

pub fn to_ntriples(triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&t.to_ntriples());
        out.push('\n');
    }
    out
}
