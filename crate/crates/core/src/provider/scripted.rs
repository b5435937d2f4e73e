use std::collections::VecDeque;
use std::sync::Mutex;

use super::{Provider, ProviderError, ProviderRequest, ProviderResponse};

type Responder = dyn Fn(&ProviderRequest) -> Result<String, ProviderError> + Send + Sync;

/// In-process stand-in for a model: either a fixed queue of replies or a
/// closure over the request. Every request it sees is kept for inspection.
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<String>>,
    responder: Option<Box<Responder>>,
    seen: Mutex<Vec<ProviderRequest>>,
}

impl ScriptedProvider {
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
            responder: None,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&ProviderRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        Self { queue: Mutex::new(VecDeque::new()), responder: Some(Box::new(f)), seen: Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<ProviderRequest> {
        self.seen.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn calls(&self) -> usize {
        self.seen.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        req.validate()?;
        let calls = {
            let mut seen = self.seen.lock().unwrap_or_else(|e| e.into_inner());
            seen.push(req.clone());
            seen.len()
        };
        let raw_text = match &self.responder {
            Some(f) => f(req)?,
            None => self
                .queue
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .pop_front()
                .ok_or(ProviderError::ScriptExhausted { calls })?,
        };
        Ok(ProviderResponse { raw_text, request_hash: req.hash(), latency_ms: 0, usage: None })
    }

    fn mode(&self) -> String {
        "scripted".into()
    }
}
