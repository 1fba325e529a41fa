//! Chat-completion clients: a scripted transcript replayer and an HTTP
//! client speaking the common chat-completion JSON shape.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::XfeError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn user(s: &str) -> Self {
        Message { role: "user".into(), content: s.into() }
    }

    pub fn assistant(s: &str) -> Self {
        Message { role: "assistant".into(), content: s.into() }
    }
}

pub trait ChatClient {
    /// Sends the conversation so far; returns the reply text. `round` is
    /// 1-based.
    fn complete(&mut self, round: usize, messages: &[Message]) -> Result<String, XfeError>;

    fn name(&self) -> String;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: usize,
    pub reply_sql: String,
}

/// Replays canned replies keyed by round.
#[derive(Clone, Debug, Default)]
pub struct MockClient {
    replies: BTreeMap<usize, String>,
}

impl MockClient {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        MockClient { replies: entries.into_iter().map(|e| (e.round, e.reply_sql)).collect() }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, XfeError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(line).map_err(|e| XfeError::Transcript(format!("line {}: {e}", i + 1)))?;
            entries.push(e);
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, XfeError> {
        let text = std::fs::read_to_string(path).map_err(|e| XfeError::Transcript(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }
}

impl ChatClient for MockClient {
    fn complete(&mut self, round: usize, _messages: &[Message]) -> Result<String, XfeError> {
        self.replies.get(&round).cloned().ok_or_else(|| XfeError::Transport(format!("transcript has no reply for round {round}")))
    }

    fn name(&self) -> String {
        "mock".into()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            retries: 3,
        }
    }
}

pub struct HttpClient {
    cfg: HttpConfig,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(cfg: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(cfg.timeout_secs))).build().into();
        HttpClient { cfg, agent }
    }

    fn once(&self, messages: &[Message]) -> Result<String, XfeError> {
        let key = std::env::var(&self.cfg.api_key_env).map_err(|_| XfeError::Transport(format!("{} is not set", self.cfg.api_key_env)))?;
        let body = serde_json::json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": 0,
        });
        let mut resp = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| XfeError::Transport(e.to_string()))?;
        let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| XfeError::Transport(e.to_string()))?;
        v["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| XfeError::Transport(format!("unexpected reply shape: {v}")))
    }
}

impl ChatClient for HttpClient {
    fn complete(&mut self, _round: usize, messages: &[Message]) -> Result<String, XfeError> {
        let mut wait = Duration::from_millis(500);
        let mut last = None;
        for _ in 0..self.cfg.retries.max(1) {
            match self.once(messages) {
                Ok(s) => return Ok(s),
                Err(e) => last = Some(e),
            }
            std::thread::sleep(wait);
            wait *= 2;
        }
        Err(last.expect("at least one attempt"))
    }

    fn name(&self) -> String {
        format!("http:{}", self.cfg.model)
    }
}

/// SQL from a reply: the first fenced block if any, else the whole text,
/// without a trailing semicolon.
pub fn extract_sql(reply: &str) -> String {
    let body = match reply.find("```") {
        Some(start) => {
            let rest = &reply[start + 3..];
            let rest = rest.strip_prefix("sql").or_else(|| rest.strip_prefix("SQL")).unwrap_or(rest);
            match rest.find("```") {
                Some(end) => &rest[..end],
                None => rest,
            }
        }
        None => reply,
    };
    body.trim().trim_end_matches(';').trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_and_bare_replies() {
        assert_eq!(extract_sql("Here:\n```sql\nSELECT 1 FROM t;\n```\nDone"), "SELECT 1 FROM t");
        assert_eq!(extract_sql("  SELECT a FROM t ; "), "SELECT a FROM t");
    }

    #[test]
    fn mock_replays_by_round() {
        let mut m = MockClient::from_jsonl("{\"round\":1,\"reply_sql\":\"SELECT 1 FROM t\"}\n\n{\"round\":2,\"reply_sql\":\"x\"}").unwrap();
        assert_eq!(m.complete(2, &[]).unwrap(), "x");
        assert!(m.complete(3, &[]).is_err());
        assert!(MockClient::from_jsonl("{bad").is_err());
    }
}
