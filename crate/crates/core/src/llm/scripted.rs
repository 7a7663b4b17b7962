use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, Completion, LlmError, LlmProvider, Usage};

pub const HASH_EMBEDDING_DIM: usize = 256;

/// One `pattern -> response` rule. Patterns are regular expressions matched
/// against the last user message; `response` may reference capture groups
/// (`${name}`, `$1`; `$$` for a literal dollar sign).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub pattern: String,
    /// Only match requests for this 1-based conversation turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<u32>,
    pub response: String,
}

impl ScriptRule {
    pub fn new(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptRule {
            pattern: pattern.into(),
            turn: None,
            response: response.into(),
        }
    }

    pub fn on_turn(mut self, turn: u32) -> Self {
        self.turn = Some(turn);
        self
    }
}

#[derive(Debug, Default, Clone)]
struct ConversationCursor {
    calls: u64,
    last_rule: Option<usize>,
}

/// Deterministic provider answering from an ordered rule list; the first
/// matching rule wins.
pub struct ScriptedProvider {
    rules: Vec<(Regex, ScriptRule)>,
    cursors: Mutex<HashMap<String, ConversationCursor>>,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, LlmError> {
        let compiled = rules
            .into_iter()
            .map(|rule| {
                Regex::new(&rule.pattern)
                    .map(|re| (re, rule.clone()))
                    .map_err(|e| LlmError::Config(format!("bad script pattern {:?}: {e}", rule.pattern)))
            })
            .collect::<Result<_, _>>()?;
        Ok(ScriptedProvider {
            rules: compiled,
            cursors: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let rules: Vec<ScriptRule> =
            serde_json::from_str(text).map_err(|e| LlmError::Config(format!("script file: {e}")))?;
        Self::new(rules)
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Number of completions served for `conversation` so far.
    pub fn call_count(&self, conversation: &str) -> u64 {
        self.cursors
            .lock()
            .unwrap()
            .get(conversation)
            .map_or(0, |c| c.calls)
    }

    /// Index of the rule that answered the latest request in `conversation`.
    pub fn last_rule(&self, conversation: &str) -> Option<usize> {
        self.cursors
            .lock()
            .unwrap()
            .get(conversation)
            .and_then(|c| c.last_rule)
    }
}

impl LlmProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        let message = request.last_user_message().unwrap_or_default();
        let key = request.conversation.clone().unwrap_or_default();
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry(key).or_default();
        cursor.calls += 1;
        for (idx, (re, rule)) in self.rules.iter().enumerate() {
            if rule.turn.is_some() && rule.turn != request.turn {
                continue;
            }
            if let Some(caps) = re.captures(message) {
                let mut text = String::new();
                caps.expand(&rule.response, &mut text);
                cursor.last_rule = Some(idx);
                let usage = Usage {
                    prompt_tokens: approx_tokens(message),
                    completion_tokens: approx_tokens(&text),
                };
                return Ok(Completion { text, usage });
            }
        }
        cursor.last_rule = None;
        Err(LlmError::ScriptExhausted {
            last_user_message: message.chars().take(200).collect(),
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError> {
        Ok(texts.iter().map(|t| hash_embedding(t)).collect())
    }
}

fn approx_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Unit-length signed feature-hashing vector of the lowercase word tokens.
pub fn hash_embedding(text: &str) -> Vec<f32> {
    let mut v = vec![0f32; HASH_EMBEDDING_DIM];
    let lower = text.to_lowercase();
    let mut any = false;
    for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        any = true;
        let h = fnv1a(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % HASH_EMBEDDING_DIM as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if !any || norm == 0.0 {
        let h = fnv1a(text.as_bytes());
        v.iter_mut().for_each(|x| *x = 0.0);
        v[(h % HASH_EMBEDDING_DIM as u64) as usize] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

#[cfg(test)]
mod tests {
    use super::super::{cosine_similarity, ChatMessage};
    use super::*;

    fn ask(p: &ScriptedProvider, text: &str, turn: Option<u32>) -> Result<String, LlmError> {
        let mut r = ChatRequest::new(vec![ChatMessage::user(text)]).unwrap();
        r.turn = turn;
        r.conversation = Some("c".into());
        p.complete(&r).map(|c| c.text)
    }

    #[test]
    fn catch_all_rule() {
        let p = ScriptedProvider::new(vec![ScriptRule::new(".*", "OK")]).unwrap();
        assert_eq!(ask(&p, "anything", None).unwrap(), "OK");
    }

    #[test]
    fn first_matching_rule_wins() {
        let p = ScriptedProvider::from_json(
            r#"[{"pattern": "height", "response": "first"},
                {"pattern": "height|width", "response": "second"},
                {"pattern": ".*", "response": "fallback"}]"#,
        )
        .unwrap();
        assert_eq!(ask(&p, "what height?", None).unwrap(), "first");
        assert_eq!(ask(&p, "what width?", None).unwrap(), "second");
        assert_eq!(ask(&p, "price?", None).unwrap(), "fallback");
        assert_eq!(p.call_count("c"), 3);
        assert_eq!(p.last_rule("c"), Some(2));
    }

    #[test]
    fn turn_constraints_and_captures() {
        let p = ScriptedProvider::new(vec![
            ScriptRule::new("Q: (?P<q>.*)", "turn two: ${q}").on_turn(2),
            ScriptRule::new("Q: (?P<q>.*)", "echo ${q} $$5"),
        ])
        .unwrap();
        assert_eq!(ask(&p, "Q: hi", Some(1)).unwrap(), "echo hi $5");
        assert_eq!(ask(&p, "Q: hi", Some(2)).unwrap(), "turn two: hi");
    }

    #[test]
    fn unmatched_request_is_script_exhausted() {
        let p = ScriptedProvider::new(vec![ScriptRule::new("^never$", "x")]).unwrap();
        assert!(matches!(ask(&p, "hello", None), Err(LlmError::ScriptExhausted { .. })));
    }

    #[test]
    fn bad_pattern_is_config_error() {
        assert!(matches!(
            ScriptedProvider::new(vec![ScriptRule::new("(", "x")]),
            Err(LlmError::Config(_))
        ));
    }

    #[test]
    fn hashed_embeddings_are_deterministic_unit_vectors() {
        let p = ScriptedProvider::new(vec![]).unwrap();
        let texts: Vec<String> = ["engine performance 125 kW", "engine performance 125 kW", "..."]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let v = p.embed(&texts).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| x.len() == HASH_EMBEDDING_DIM));
        assert_eq!(v[0], v[1]);
        assert!((cosine_similarity(&v[0], &v[1]) - 1.0).abs() < 1e-6);
        assert!((cosine_similarity(&v[2], &v[2]) - 1.0).abs() < 1e-6);
    }
}
