//! Adapter for an external LLM that produces the analysis text and the
//! confidence distribution.
//!
//! Wire contract: `POST {endpoint}` with JSON
//! `{"template_id", "rendered_prompt", "model", "seed"?}`; the reply body is
//! expected to hold `{"analysis": string, "distribution": {name: number}}`,
//! either as the whole body or embedded in it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{validate_distribution, Assessment, AssessRequest, BeliefError};
use crate::knowledge::SymptomId;

pub const ENV_ENDPOINT: &str = "COD_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "COD_LLM_API_KEY";

const REASONING_TEMPLATE: &str = include_str!("../../templates/reasoning.txt");
const RETHINK_TEMPLATE: &str = include_str!("../../templates/rethink.txt");
const EXTRACT_TEMPLATE: &str = include_str!("../../templates/extract.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub template_id: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Base delay of the exponential backoff between transport retries.
    pub backoff_ms: u64,
    /// Directory holding `reasoning.txt`, `rethink.txt` and `extract.txt`
    /// overrides; bundled templates are used when unset.
    pub template_dir: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: std::env::var(ENV_ENDPOINT).unwrap_or_default(),
            model: "diagnosis-model".into(),
            template_id: "cod-reasoning".into(),
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 250,
            template_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub reasoning: String,
    pub rethink: String,
    pub extract: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            reasoning: REASONING_TEMPLATE.to_string(),
            rethink: RETHINK_TEMPLATE.to_string(),
            extract: EXTRACT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Loads overrides from `dir`; files that are missing keep the bundled text.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, BeliefError> {
        let dir = dir.as_ref();
        let mut t = Self::default();
        for (name, slot) in [
            ("reasoning.txt", &mut t.reasoning),
            ("rethink.txt", &mut t.rethink),
            ("extract.txt", &mut t.extract),
        ] {
            let p = dir.join(name);
            if p.exists() {
                *slot = fs::read_to_string(&p).map_err(|e| BeliefError::Template(format!("{}: {e}", p.display())))?;
            }
        }
        Ok(t)
    }

    pub fn render_reasoning(&self, req: &AssessRequest<'_>) -> String {
        let explicit: Vec<&SymptomId> = req.evidence.present.iter().filter(|s| req.reported.contains(*s)).collect();
        let implicit: Vec<&SymptomId> = req.evidence.present.iter().filter(|s| !req.reported.contains(*s)).collect();
        let names: Vec<&str> = req
            .candidates
            .ids()
            .map(|id| req.db.get(id).map_or(id, |d| d.name.as_str()))
            .collect();
        self.reasoning
            .replace("{explicit_syms}", &list_or_none(&explicit))
            .replace("{implicit_syms}", &list_or_none(&implicit))
            .replace("{candidate_diseases}", &names.join(", "))
    }

    /// Follow-up prompt: the original prompt, the rejected reply, then the
    /// rethink instruction.
    pub fn render_rethink(&self, reasoning_prompt: &str, previous_reply: &str) -> String {
        format!(
            "{}\n\nYour previous answer:\n{}\n\n{}",
            reasoning_prompt.trim_end(),
            previous_reply.trim(),
            self.rethink.trim_end()
        )
    }

    pub fn render_extract(&self, message: &str, vocabulary: &[SymptomId]) -> String {
        let vocab: Vec<&str> = vocabulary.iter().map(|s| s.as_str()).collect();
        self.extract
            .replace("{vocabulary}", &vocab.join(", "))
            .replace("{message}", message)
    }
}

fn list_or_none(items: &[&SymptomId]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub template_id: String,
    pub rendered_prompt: String,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Sends one rendered prompt and returns the raw reply body.
pub trait LlmTransport: Send + Sync {
    fn send(&self, req: &LlmRequest) -> Result<String, TransportError>;
}

/// Blocking HTTP transport. Must not be driven from inside an async task.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout: Duration, api_key: Option<String>) -> Result<Self, BeliefError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BeliefError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            api_key,
        })
    }
}

impl LlmTransport for HttpTransport {
    fn send(&self, req: &LlmRequest) -> Result<String, TransportError> {
        let mut builder = self.client.post(&self.endpoint).json(req);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| TransportError(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError(format!("HTTP {status}: {body}")));
        }
        Ok(body)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RawAssessment {
    pub analysis: String,
    pub distribution: BTreeMap<String, f64>,
}

/// Accepts the JSON object as the whole body, or the outermost `{...}`
/// embedded in surrounding text (including a JSON string field such as
/// `content`).
pub fn parse_reply(body: &str) -> Option<RawAssessment> {
    if let Ok(raw) = serde_json::from_str::<RawAssessment>(body) {
        return Some(raw);
    }
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(body) {
        for v in map.values() {
            if let Some(inner) = v.as_str().and_then(parse_reply) {
                return Some(inner);
            }
        }
    }
    let start = body.find('{')?;
    let end = body.rfind('}')?;
    if end <= start {
        return None;
    }
    let slice = &body[start..=end];
    if slice.len() == body.len() {
        return None;
    }
    parse_reply(slice)
}

#[derive(Clone)]
pub struct LlmBackend {
    config: LlmConfig,
    templates: PromptTemplates,
    transport: Arc<dyn LlmTransport>,
}

impl std::fmt::Debug for LlmBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

impl LlmBackend {
    /// HTTP-backed adapter; the API key is read from `COD_LLM_API_KEY`.
    pub fn from_config(config: LlmConfig) -> Result<Self, BeliefError> {
        if config.endpoint.trim().is_empty() {
            return Err(BeliefError::Config(format!(
                "llm backend needs an endpoint (set {ENV_ENDPOINT})"
            )));
        }
        let transport = HttpTransport::new(
            &config.endpoint,
            Duration::from_secs(config.timeout_secs),
            std::env::var(ENV_API_KEY).ok(),
        )?;
        Self::with_transport(config, Arc::new(transport))
    }

    pub fn with_transport(config: LlmConfig, transport: Arc<dyn LlmTransport>) -> Result<Self, BeliefError> {
        let templates = match &config.template_dir {
            Some(dir) => PromptTemplates::load_dir(dir)?,
            None => PromptTemplates::default(),
        };
        Ok(Self {
            config,
            templates,
            transport,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    fn send_with_retries(&self, template_id: &str, prompt: String, seed: Option<u64>) -> Result<String, BeliefError> {
        let req = LlmRequest {
            template_id: template_id.to_string(),
            rendered_prompt: prompt,
            model: self.config.model.clone(),
            seed,
        };
        let mut attempt = 0u32;
        loop {
            match self.transport.send(&req) {
                Ok(body) => return Ok(body),
                Err(e) if attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("llm transport failed (attempt {}): {e}; retrying in {delay} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(BeliefError::Transport(e.0)),
            }
        }
    }

    /// Renders the reasoning prompt and parses the reply. An unparseable
    /// reply gets one rethink round before the call fails.
    pub fn assess(&self, req: &AssessRequest<'_>) -> Result<Assessment, BeliefError> {
        let prompt = self.templates.render_reasoning(req);
        let body = self.send_with_retries(&self.config.template_id, prompt.clone(), req.seed)?;
        match parse_reply(&body) {
            Some(raw) => self.finish(req, raw, prompt, body),
            None => {
                log::warn!("llm reply unparseable; issuing rethink prompt");
                let retry_prompt = self.templates.render_rethink(&prompt, &body);
                let retry = self.send_with_retries("cod-rethink", retry_prompt.clone(), req.seed)?;
                let raw = parse_reply(&retry).ok_or_else(|| BeliefError::Unparseable(truncate(&retry)))?;
                self.finish(req, raw, retry_prompt, retry)
            }
        }
    }

    /// Asks the model to reconsider a rejected assessment.
    pub fn rethink(&self, req: &AssessRequest<'_>, previous: &Assessment) -> Result<Assessment, BeliefError> {
        let base = previous
            .prompt
            .clone()
            .unwrap_or_else(|| self.templates.render_reasoning(req));
        let reply = previous.raw_reply.clone().unwrap_or_default();
        let prompt = self.templates.render_rethink(&base, &reply);
        let body = self.send_with_retries("cod-rethink", prompt.clone(), req.seed)?;
        let raw = parse_reply(&body).ok_or_else(|| BeliefError::Unparseable(truncate(&body)))?;
        self.finish(req, raw, prompt, body)
    }

    fn finish(
        &self,
        req: &AssessRequest<'_>,
        raw: RawAssessment,
        prompt: String,
        body: String,
    ) -> Result<Assessment, BeliefError> {
        // The model answers with display names; map them back to ids.
        let keyed: Vec<(String, f64)> = raw
            .distribution
            .iter()
            .map(|(name, v)| (resolve_name(req, name), *v))
            .collect();
        let (distribution, warnings) =
            validate_distribution(keyed.iter().map(|(k, v)| (k.as_str(), *v)), req.candidates)?;
        let mut reasoning = super::bayes::reasoning_for(req.evidence, req.candidates, req.db, &distribution);
        reasoning.text = raw.analysis;
        Ok(Assessment {
            reasoning,
            distribution,
            warnings,
            prompt: Some(prompt),
            raw_reply: Some(body),
        })
    }

    /// Symptom extraction from free text, restricted to the vocabulary.
    pub fn extract_symptoms(&self, message: &str, vocabulary: &[SymptomId]) -> Result<Vec<String>, BeliefError> {
        #[derive(Deserialize)]
        struct Reply {
            symptoms: Vec<String>,
        }
        let prompt = self.templates.render_extract(message, vocabulary);
        let body = self.send_with_retries("cod-extract", prompt, None)?;
        let parsed: Reply = serde_json::from_str(&body)
            .ok()
            .or_else(|| {
                let (s, e) = (body.find('{')?, body.rfind('}')?);
                serde_json::from_str(body.get(s..=e)?).ok()
            })
            .ok_or_else(|| BeliefError::Unparseable(truncate(&body)))?;
        Ok(parsed.symptoms)
    }
}

fn resolve_name(req: &AssessRequest<'_>, key: &str) -> String {
    let ids: Vec<&str> = req.candidates.ids().collect();
    let name_of = |id: &str| req.db.get(id).map(|d| d.name.clone()).unwrap_or_default();
    if let Some(id) = ids.iter().find(|id| name_of(id) == key) {
        return id.to_string();
    }
    if ids.contains(&key) {
        return key.to_string();
    }
    let lower = key.trim().to_lowercase();
    ids.iter()
        .find(|id| name_of(id).to_lowercase() == lower || id.to_lowercase() == lower)
        .map_or_else(|| key.to_string(), |id| id.to_string())
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}
