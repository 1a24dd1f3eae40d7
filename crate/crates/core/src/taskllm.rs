//! Asks a text-generation backend which part of the held object serves a task.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const INSTRUCTION: &str = "Answer the question as if you are a robot with an object in your gripper. \
Follow the exact format. You will receive two pieces of input: 'O' representing the object in your gripper \
and 'T' representing the task you need to perform with the object. Provide a response, identifying a specific \
part of object 'O' that is most useful for completing task 'T'. Only provide the specific part of 'O'.";

pub const ENV_KEY: &str = "TOAO_LLM_KEY";
pub const ENV_ENDPOINT: &str = "TOAO_LLM_ENDPOINT";

pub const DEFAULT_STUB_TABLE: &str = include_str!("../fixtures/stub_answers.json");

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("object and task text must be non-empty")]
    EmptyQuery,
    #[error("no stub answer for O={0:?}, T={1:?}")]
    StubMiss(String, String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("cannot parse a part from reply {0:?}")]
    UnparseableAnswer(String),
    #[error("http backend needs an endpoint (config or {ENV_ENDPOINT})")]
    MissingEndpoint,
    #[error("stub table: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQuery {
    pub object_text: String,
    pub task_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_text: Option<String>,
}

impl TaskQuery {
    pub fn new(object: impl Into<String>, task: impl Into<String>) -> Result<Self, TaskError> {
        let (object_text, task_text) = (object.into(), task.into());
        if object_text.trim().is_empty() || task_text.trim().is_empty() {
            return Err(TaskError::EmptyQuery);
        }
        Ok(Self { object_text, task_text, part_text: None })
    }
}

pub fn build_prompt(q: &TaskQuery) -> Result<String, TaskError> {
    if q.object_text.trim().is_empty() || q.task_text.trim().is_empty() {
        return Err(TaskError::EmptyQuery);
    }
    Ok(format!("{INSTRUCTION}\n\nO: {}\nT: {}", q.object_text, q.task_text))
}

/// Lowercases, drops a leading article and trailing periods.
fn normalize_part(s: &str) -> String {
    let mut s = s.trim().to_lowercase();
    for article in ["the ", "a ", "an "] {
        if let Some(rest) = s.strip_prefix(article) {
            s = rest.trim_start().to_string();
            break;
        }
    }
    s.trim_end().trim_end_matches('.').trim_end().to_string()
}

/// Takes the text after the first `-A:` or `A:` marker, up to the end of that line.
pub fn parse_answer(raw: &str) -> Result<String, TaskError> {
    let unparseable = || TaskError::UnparseableAnswer(raw.to_string());
    let at = raw.find("A:").ok_or_else(unparseable)?;
    let rest = raw[at + 2..].lines().next().unwrap_or("");
    let part = normalize_part(rest);
    if part.is_empty() {
        return Err(unparseable());
    }
    Ok(part)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubEntry {
    pub o: String,
    pub t: String,
    pub a: String,
}

/// Canned replies keyed by normalized (object, task).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StubTable {
    answers: HashMap<(String, String), String>,
}

fn key(o: &str, t: &str) -> (String, String) {
    (o.trim().to_lowercase(), t.trim().to_lowercase())
}

impl StubTable {
    pub fn from_entries(entries: impl IntoIterator<Item = StubEntry>) -> Self {
        Self { answers: entries.into_iter().map(|e| (key(&e.o, &e.t), e.a)).collect() }
    }

    pub fn from_json(s: &str) -> Result<Self, TaskError> {
        Ok(Self::from_entries(serde_json::from_str::<Vec<StubEntry>>(s)?))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TaskError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The two published sunflower replies.
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_STUB_TABLE).expect("bundled stub table is valid")
    }

    /// Replies may carry the answer marker or be the bare part phrase.
    pub fn lookup(&self, q: &TaskQuery) -> Result<String, TaskError> {
        let raw = self
            .answers
            .get(&key(&q.object_text, &q.task_text))
            .ok_or_else(|| TaskError::StubMiss(q.object_text.clone(), q.task_text.clone()))?;
        if raw.contains("A:") {
            return parse_answer(raw);
        }
        let part = normalize_part(raw);
        if part.is_empty() {
            return Err(TaskError::UnparseableAnswer(raw.clone()));
        }
        Ok(part)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackend {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
}

impl HttpBackend {
    /// Endpoint from the argument, else from `TOAO_LLM_ENDPOINT`.
    pub fn new(endpoint: Option<String>, model: impl Into<String>, timeout_secs: f64) -> Result<Self, TaskError> {
        let endpoint = endpoint
            .filter(|e| !e.is_empty())
            .or_else(|| std::env::var(ENV_ENDPOINT).ok().filter(|e| !e.is_empty()))
            .ok_or(TaskError::MissingEndpoint)?;
        Ok(Self { endpoint, model: model.into(), timeout_secs })
    }

    fn request_once(&self, agent: &ureq::Agent, payload: &Value) -> Result<Value, String> {
        let mut req = agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Ok(k) = std::env::var(ENV_KEY) {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req.send_json(payload).map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }

    /// At most two requests: one retry after a transport or status error.
    pub fn complete(&self, prompt: &str) -> Result<String, TaskError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(self.timeout_secs)))
            .build()
            .into();
        let payload = json!({"model": self.model, "messages": [{"role": "user", "content": prompt}]});
        let reply = match self.request_once(&agent, &payload) {
            Ok(v) => v,
            Err(_) => self.request_once(&agent, &payload).map_err(TaskError::BackendUnavailable)?,
        };
        reply_text(&reply).map(str::to_string).ok_or_else(|| TaskError::UnparseableAnswer(reply.to_string()))
    }
}

/// First message content of an OpenAI-style or plain chat reply.
fn reply_text(v: &Value) -> Option<&str> {
    [
        v.pointer("/choices/0/message/content"),
        v.pointer("/message/content"),
        v.pointer("/messages/0/content"),
        v.pointer("/content"),
    ]
    .into_iter()
    .flatten()
    .find_map(Value::as_str)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Stub(StubTable),
    Http(HttpBackend),
}

pub fn resolve_part(q: &TaskQuery, backend: &Backend) -> Result<TaskQuery, TaskError> {
    let prompt = build_prompt(q)?;
    let part = match backend {
        Backend::Stub(table) => table.lookup(q)?,
        Backend::Http(http) => parse_answer(&http.complete(&prompt)?)?,
    };
    Ok(TaskQuery { part_text: Some(part), ..q.clone() })
}

/// Backend plus a response cache keyed by (O, T), safe to share across threads.
#[derive(Debug)]
pub struct Resolver {
    backend: Backend,
    cache: Mutex<HashMap<(String, String), String>>,
}

impl Resolver {
    pub fn new(backend: Backend) -> Self {
        Self { backend, cache: Mutex::new(HashMap::new()) }
    }

    pub fn resolve(&self, q: &TaskQuery) -> Result<TaskQuery, TaskError> {
        let k = key(&q.object_text, &q.task_text);
        if let Some(part) = self.cache.lock().expect("cache lock").get(&k) {
            return Ok(TaskQuery { part_text: Some(part.clone()), ..q.clone() });
        }
        let resolved = resolve_part(q, &self.backend)?;
        let part = resolved.part_text.clone().expect("resolve_part sets the part");
        self.cache.lock().expect("cache lock").insert(k, part);
        Ok(resolved)
    }
}
