// Copyright 2026 Geoscope Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use anyhow::{anyhow, Result};
use serde_json::{json, Value};
use ureq::Agent;

use geoscope_core::ragx::{LlmClient, LlmRequest};
use geoscope_core::BackendError;

use crate::config::HttpConfig;

pub struct HttpClient {
    agent: Agent,
    endpoint: String,
    model: String,
    temperature: Option<f64>,
    api_key: String,
    max_concurrency: usize,
    timeout: Duration,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("endpoint", &self.endpoint).field("model", &self.model).finish()
    }
}

impl HttpClient {
    /// The API key is read from the environment variable named in the
    /// config; it is never part of the config itself.
    pub fn from_config(cfg: &HttpConfig) -> Result<Self> {
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| anyhow!("environment variable {} (llm.api_key_env) is not set", cfg.api_key_env))?;
        let timeout = Duration::from_secs(cfg.timeout_secs);
        let agent: Agent =
            Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Ok(HttpClient {
            agent,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            api_key,
            max_concurrency: cfg.max_concurrency,
            timeout,
        })
    }

    pub fn request_body(&self, req: &LlmRequest) -> Value {
        let mut messages = vec![json!({ "role": "system", "content": req.system_prompt })];
        let mut parts = Vec::new();
        if !req.user_content.is_empty() {
            parts.push(json!({ "type": "text", "text": req.user_content }));
        }
        if let Some(a) = &req.attachment {
            parts.push(json!({ "type": "text", "text": a }));
        }
        if !parts.is_empty() {
            messages.push(json!({ "role": "user", "content": parts }));
        }
        let mut body = json!({ "model": self.model, "messages": messages });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

fn extract_content(v: &Value) -> Option<String> {
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Some(s.clone()),
        // some servers return content parts
        Value::Array(parts) => Some(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        _ => None,
    }
}

impl LlmClient for HttpClient {
    fn generate(&self, req: &LlmRequest) -> Result<String, BackendError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.request_body(req));
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(BackendError::Timeout(self.timeout)),
            Err(e) => return Err(BackendError::Unavailable(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::Unavailable(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::InvalidResponse(format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            )));
        }
        let v: Value = resp.body_mut().read_json().map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
        extract_content(&v).ok_or_else(|| BackendError::InvalidResponse("no choices[0].message.content".into()))
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }

    fn timeout(&self) -> Duration {
        self.timeout
    }
}
