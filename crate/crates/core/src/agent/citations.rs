use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Bracket citations found in an answer, checked against the source count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CitationReport {
    /// Distinct cited source numbers, ascending.
    pub cited: Vec<u32>,
    /// Cited numbers outside `1..=sourceCount`.
    pub invalid: Vec<u32>,
}

impl CitationReport {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_empty()
    }
}

fn bracket_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\s*\d+\s*(?:(?:,|-|–)\s*\d+\s*)*)\]").unwrap())
}

/// Parses `[n]`, `[a-b]` and `[a, b]` forms.
pub fn extract_citations(answer: &str) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for caps in bracket_re().captures_iter(answer) {
        for part in caps[1].split(',') {
            let bounds: Vec<u32> = part
                .split(['-', '–'])
                .filter_map(|n| n.trim().parse().ok())
                .collect();
            match bounds.as_slice() {
                [n] => {
                    out.insert(*n);
                }
                [a, b] if a <= b && b - a <= 1000 => out.extend(*a..=*b),
                [a, b] => {
                    out.insert(*a);
                    out.insert(*b);
                }
                _ => {}
            }
        }
    }
    out
}

pub fn check_citations(answer: &str, source_count: usize) -> CitationReport {
    let cited = extract_citations(answer);
    CitationReport {
        invalid: cited
            .iter()
            .copied()
            .filter(|&n| n == 0 || n as usize > source_count)
            .collect(),
        cited: cited.into_iter().collect(),
    }
}
