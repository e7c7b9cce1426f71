//! One-shot hyperparameter recommendations from a chat-completions endpoint.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use url::Url;

use crate::prompt::{
    classify_parsed, parse_response, render_query, PromptError, PromptTemplate, RelevanceClass,
};
use crate::space::{HyperparameterSet, SearchSpace};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no usable recommendation after {attempts} attempt(s): {}", format_histogram(.histogram))]
    RecommendationFailed {
        attempts: u32,
        histogram: BTreeMap<RelevanceClass, u32>,
    },
}

pub fn format_histogram(h: &BTreeMap<RelevanceClass, u32>) -> String {
    h.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_tokens() -> u32 {
    256
}
fn default_timeout() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    2
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            timeout_seconds: default_timeout(),
            max_retries: default_max_retries(),
            api_key_env: default_api_key_env(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let url = Url::parse(&self.base_url)
            .map_err(|e| LlmError::Config(format!("base_url `{}`: {e}", self.base_url)))?;
        if url.cannot_be_a_base() {
            return Err(LlmError::Config(format!("base_url `{}` is not a base URL", self.base_url)));
        }
        if self.model_name.is_empty() {
            return Err(LlmError::Config("model_name is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be positive".into()));
        }
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(LlmError::Config("timeout_seconds must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_seconds)
    }
}

/// Everything needed to perform one POST.
#[derive(Debug, Clone, PartialEq)]
pub struct WireRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
    pub timeout: Duration,
}

impl WireRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Builds the chat-completions request. Reads the API key variable but does no I/O.
pub fn build_request(query_text: &str, system_prompt: &str, config: &EndpointConfig) -> WireRequest {
    let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
    if let Ok(key) = std::env::var(&config.api_key_env) {
        headers.push(("Authorization".into(), format!("Bearer {key}")));
    }
    WireRequest {
        url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
        headers,
        body: json!({
            "model": config.model_name,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": query_text},
            ],
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        }),
        timeout: config.timeout(),
    }
}

/// `choices[0].message.content` of a response body.
pub fn parse_completion(body: &str) -> Result<String, LlmError> {
    let doc: Value =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    doc.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
}

/// Sends a request and returns the raw response body.
pub trait Transport {
    fn send(&self, request: &WireRequest) -> Result<String, LlmError>;
}

/// Blocking HTTP/1.1 transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Endpoint(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &WireRequest) -> Result<String, LlmError> {
        let mut builder = self
            .client
            .post(&request.url)
            .timeout(request.timeout)
            .body(request.body.to_string());
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let response = builder
            .send()
            .map_err(|e| LlmError::Endpoint(format!("{}: {e}", request.url)))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| LlmError::Endpoint(e.to_string()))?;
        if !status.is_success() {
            let excerpt: String = text.chars().take(200).collect();
            return Err(LlmError::Endpoint(format!("HTTP {status}: {excerpt}")));
        }
        Ok(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub params: HyperparameterSet,
    pub raw_response: String,
    pub attempts: u32,
    pub endpoint_model: String,
}

/// Queries the endpoint until a response parses into an in-space set, re-sending
/// the identical request up to `max_retries` extra times.
pub fn recommend_one_shot<T: Transport + ?Sized>(
    transport: &T,
    model_code: &str,
    target_accuracy: f64,
    config: &EndpointConfig,
    template: &PromptTemplate,
    space: &SearchSpace,
) -> Result<Recommendation, LlmError> {
    config.validate()?;
    let query = render_query(model_code, target_accuracy, template)?;
    let request = build_request(&query, &template.system_prompt, config);

    let mut histogram = BTreeMap::new();
    let max_attempts = config.max_retries + 1;
    for attempt in 1..=max_attempts {
        let body = transport.send(&request)?;
        let content = parse_completion(&body)?;
        let parsed = parse_response(&content);
        let class = classify_parsed(&parsed, space);
        log::debug!("attempt {attempt}: {class}");
        match parsed {
            Ok(p) if class == RelevanceClass::Relevant => {
                return Ok(Recommendation {
                    params: p.params,
                    raw_response: content,
                    attempts: attempt,
                    endpoint_model: config.model_name.clone(),
                })
            }
            _ => *histogram.entry(class).or_insert(0) += 1,
        }
    }
    Err(LlmError::RecommendationFailed {
        attempts: max_attempts,
        histogram,
    })
}
