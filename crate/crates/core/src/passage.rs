//! Retrievable text units and their JSONL interchange format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    KgCapsule,
    ExternalDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub source_kind: SourceKind,
    pub subject_iri: Option<String>,
}

pub fn write_jsonl<W: Write>(passages: &[Passage], mut out: W) -> std::io::Result<()> {
    for p in passages {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> std::io::Result<Vec<Passage>> {
    let mut passages = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let passage = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        passages.push(passage);
    }
    Ok(passages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_shape() {
        let p = Passage {
            id: "bmw-120-sport".into(),
            text: "BMW 120 Sport is Engine Specification.".into(),
            source_kind: SourceKind::KgCapsule,
            subject_iri: Some("http://ex.org/engine/bmw-120-sport".into()),
        };
        let mut buf = Vec::new();
        write_jsonl(std::slice::from_ref(&p), &mut buf).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.contains(r#""sourceKind":"KgCapsule""#));
        assert!(line.contains(r#""subjectIri":"http://ex.org/engine/bmw-120-sport""#));
        assert_eq!(read_jsonl(&buf[..]).unwrap(), vec![p]);
    }
}
