use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::{json, Value};
use tracing::warn;

use super::{BackendConfig, BackendKind, Completion, GenRequest, GenResponse, LanguageModel, LlmError, TokenCounts};

const BACKOFF_FACTOR: u32 = 2;
const MAX_BACKOFF: Duration = Duration::from_secs(60);

/// Client for chat-completions style endpoints (`messages` in, `choices` out)
/// and their plain-completion variant (`prompt` in, `choices[].text` out).
#[derive(Debug)]
pub struct HttpBackend {
    cfg: BackendConfig,
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

enum Attempt {
    Done(GenResponse),
    Retry { error: LlmError, retry_after: Option<Duration> },
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, LlmError> {
        let url = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| LlmError::Config("endpoint_url missing".into()))?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(cfg.request_timeout_secs)))
            .build();
        Ok(HttpBackend {
            agent: ureq::Agent::new_with_config(config),
            cfg,
            url,
            api_key,
        })
    }

    fn body(&self, request: &GenRequest) -> Value {
        let temperature = request.temperature.unwrap_or(self.cfg.default_temperature);
        let mut body = json!({
            "model": self.cfg.model_name,
            "temperature": temperature,
            "max_tokens": request.max_tokens,
        });
        match self.cfg.kind {
            BackendKind::HttpCompletion => {
                let prompt = request
                    .messages
                    .iter()
                    .map(|m| m.text.as_str())
                    .collect::<Vec<_>>()
                    .join("\n\n");
                body["prompt"] = Value::String(prompt);
            }
            _ => {
                body["messages"] = request
                    .messages
                    .iter()
                    .map(|m| json!({"role": m.role, "content": m.text}))
                    .collect();
            }
        }
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let started = Instant::now();
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = match call.send_json(body) {
            Ok(response) => response,
            Err(err) => {
                return Attempt::Retry {
                    error: LlmError::TransportError {
                        attempts: 0,
                        message: err.to_string(),
                    },
                    retry_after: None,
                }
            }
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|secs| secs.is_finite() && *secs >= 0.0)
            .map(Duration::from_secs_f64);
        if status == 429 {
            return Attempt::Retry {
                error: LlmError::RateLimited {
                    attempts: 0,
                    retry_after,
                },
                retry_after,
            };
        }
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            let error = LlmError::Status { status, body };
            return if status >= 500 {
                Attempt::Retry { error, retry_after }
            } else {
                Attempt::Fatal(error)
            };
        }
        let value: Value = match response.body_mut().read_json() {
            Ok(value) => value,
            Err(err) => return Attempt::Fatal(LlmError::MalformedServerResponse(err.to_string())),
        };
        match parse_response(self.cfg.kind, &value) {
            Ok((text, token_counts)) => Attempt::Done(GenResponse {
                text,
                token_counts,
                latency: started.elapsed(),
            }),
            Err(err) => Attempt::Fatal(err),
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = Duration::from_millis(self.cfg.backoff_base_ms);
        let scaled = base.saturating_mul(BACKOFF_FACTOR.saturating_pow(retry));
        let jitter = rand::thread_rng().gen_range(0.5..1.5);
        scaled.mul_f64(jitter).min(MAX_BACKOFF)
    }
}

/// Extracts the generated text from a chat or completion response body.
pub(crate) fn parse_response(kind: BackendKind, value: &Value) -> Result<(String, Option<TokenCounts>), LlmError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::MalformedServerResponse("no choices in response".into()))?;
    let text = match kind {
        BackendKind::HttpCompletion => choice.get("text"),
        _ => choice.get("message").and_then(|m| m.get("content")),
    };
    let text = match text {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) => String::new(),
        _ => return Err(LlmError::MalformedServerResponse("choice carries no text".into())),
    };
    let token_counts = value.get("usage").and_then(|u| {
        Some(TokenCounts {
            prompt: u.get("prompt_tokens")?.as_u64()? as u32,
            completion: u.get("completion_tokens")?.as_u64()? as u32,
        })
    });
    Ok((text, token_counts))
}

impl LanguageModel for HttpBackend {
    fn complete(&self, request: &GenRequest) -> Result<Completion, LlmError> {
        let body = self.body(request);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(response) => return Ok(Completion { response, attempts }),
                Attempt::Fatal(err) => return Err(err),
                Attempt::Retry { error, retry_after } => {
                    if attempts > self.cfg.max_retries {
                        return Err(match error {
                            LlmError::RateLimited { retry_after, .. } => LlmError::RateLimited { attempts, retry_after },
                            LlmError::TransportError { message, .. } => LlmError::TransportError { attempts, message },
                            other => LlmError::TransportError {
                                attempts,
                                message: other.to_string(),
                            },
                        });
                    }
                    let delay = retry_after.unwrap_or_else(|| self.backoff(attempts - 1)).min(MAX_BACKOFF);
                    warn!(attempt = attempts, ?delay, %error, "retrying model call");
                    thread::sleep(delay);
                }
            }
        }
    }
}
