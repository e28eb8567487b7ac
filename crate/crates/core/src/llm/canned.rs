use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use super::{Completion, GenRequest, GenResponse, LanguageModel, LlmError};

/// Replays a fixed list of generations, then repeats the fallback (or an
/// empty string). Every request is kept for inspection.
#[derive(Debug, Default)]
pub struct CannedBackend {
    replies: Mutex<VecDeque<String>>,
    fallback: String,
    requests: Mutex<Vec<GenRequest>>,
}

impl CannedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CannedBackend {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            fallback: String::new(),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn with_fallback(mut self, fallback: impl Into<String>) -> Self {
        self.fallback = fallback.into();
        self
    }

    pub fn requests(&self) -> Vec<GenRequest> {
        self.requests.lock().expect("requests lock").clone()
    }
}

impl LanguageModel for CannedBackend {
    fn complete(&self, request: &GenRequest) -> Result<Completion, LlmError> {
        self.requests.lock().expect("requests lock").push(request.clone());
        let text = self
            .replies
            .lock()
            .expect("replies lock")
            .pop_front()
            .unwrap_or_else(|| self.fallback.clone());
        Ok(Completion {
            response: GenResponse {
                text,
                token_counts: None,
                latency: Duration::ZERO,
            },
            attempts: 1,
        })
    }
}
