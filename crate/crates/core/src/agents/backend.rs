//! Completion backends. The engine only ever needs `prompt -> text`.

use std::path::Path;
use std::time::Duration;

use regex::{Regex, RegexSet, SetMatches};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOKEN_ENV: &str = "COPILOT_LLM_TOKEN";

/// Response used by a scripted backend when no entry matches.
pub const DEFAULT_FALLBACK: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned a malformed response: {0}")]
    BadResponse(String),
    #[error("invalid script: {0}")]
    Script(String),
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

/// Short stable digest of a prompt, usable as an `fp:` match key.
pub fn fingerprint(prompt: &str) -> String {
    hex::encode(&Sha256::digest(prompt.as_bytes())[..8])
}

/// `match` in a script file: one pattern, or a list that must all match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchSpec {
    One(String),
    All(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub pattern: MatchSpec,
    pub response: String,
}

#[derive(Debug)]
enum Pattern {
    Substring(String),
    /// Index into the backend's compiled regexes.
    Regex(usize),
    Fingerprint(String),
}

#[derive(Debug)]
struct Rule {
    patterns: Vec<Pattern>,
    response: String,
    expands: bool,
}

/// Deterministic pattern → canned response table.
///
/// Patterns are plain substrings, `re:<regex>` (the response may use `${n}`
/// capture references from the first regex), or `fp:<fingerprint>`. A
/// `"*"` entry sets the fallback. The first matching entry wins.
#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Vec<Rule>,
    fallback: String,
    regexes: Vec<Regex>,
    /// The same regexes, matched against a prompt in one pass.
    set: RegexSet,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        let mut rules = Vec::new();
        let mut sources: Vec<String> = Vec::new();
        let mut fallback = DEFAULT_FALLBACK.to_string();
        for entry in entries {
            let raw = match entry.pattern {
                MatchSpec::One(p) => vec![p],
                MatchSpec::All(ps) => ps,
            };
            if raw.len() == 1 && raw[0] == "*" {
                fallback = entry.response;
                continue;
            }
            if raw.is_empty() {
                return Err(BackendError::Script("entry with empty match list".into()));
            }
            let mut patterns = Vec::with_capacity(raw.len());
            for p in raw {
                patterns.push(if let Some(re) = p.strip_prefix("re:") {
                    Regex::new(re).map_err(|e| BackendError::Script(format!("{re}: {e}")))?;
                    sources.push(re.to_string());
                    Pattern::Regex(sources.len() - 1)
                } else if let Some(fp) = p.strip_prefix("fp:") {
                    Pattern::Fingerprint(fp.to_string())
                } else {
                    Pattern::Substring(p)
                });
            }
            let expands = patterns.iter().any(|p| matches!(p, Pattern::Regex(_)));
            rules.push(Rule {
                patterns,
                response: entry.response,
                expands,
            });
        }
        let regexes = sources
            .iter()
            .map(|r| Regex::new(r))
            .collect::<Result<Vec<_>, _>>();
        let set = RegexSet::new(&sources);
        match (regexes, set) {
            (Ok(regexes), Ok(set)) => Ok(ScriptedBackend {
                rules,
                fallback,
                regexes,
                set,
            }),
            (Err(e), _) | (_, Err(e)) => Err(BackendError::Script(e.to_string())),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| BackendError::Script(e.to_string()))?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A backend that always answers `response`.
    pub fn constant(response: &str) -> Self {
        ScriptedBackend {
            rules: Vec::new(),
            fallback: response.to_string(),
            regexes: Vec::new(),
            set: RegexSet::empty(),
        }
    }

    pub fn fallback(&self) -> &str {
        &self.fallback
    }

    fn respond(&self, prompt: &str) -> String {
        let mut fp: Option<String> = None;
        let mut hits: Option<SetMatches> = None;
        'rules: for rule in &self.rules {
            for p in &rule.patterns {
                let hit = match p {
                    Pattern::Substring(s) => prompt.contains(s.as_str()),
                    Pattern::Fingerprint(want) => {
                        fp.get_or_insert_with(|| fingerprint(prompt)) == want
                    }
                    Pattern::Regex(i) => hits
                        .get_or_insert_with(|| self.set.matches(prompt))
                        .matched(*i),
                };
                if !hit {
                    continue 'rules;
                }
            }
            let first_regex = rule.patterns.iter().find_map(|p| match p {
                Pattern::Regex(i) => Some(&self.regexes[*i]),
                _ => None,
            });
            return match first_regex.and_then(|re| re.captures(prompt)) {
                Some(caps) if rule.expands => {
                    let mut out = String::new();
                    caps.expand(&rule.response, &mut out);
                    out
                }
                _ => rule.response.clone(),
            };
        }
        self.fallback.clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        Ok(self.respond(prompt))
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Chat-completion endpoint speaking `{"prompt": ...}` → `{"text": ...}`.
pub struct RemoteBackend {
    endpoint: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    /// Reads the bearer token from `COPILOT_LLM_TOKEN` when set.
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, BackendError> {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::with_token(endpoint, token, timeout)
    }

    pub fn with_token(
        endpoint: &str,
        token: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        Ok(RemoteBackend {
            endpoint: endpoint.to_string(),
            token,
            client,
        })
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&CompletionRequest { prompt });
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(BackendError::Unreachable(format!(
                "status {}",
                resp.status()
            )));
        }
        let body: CompletionResponse = resp
            .json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        Ok(body.text)
    }
}
