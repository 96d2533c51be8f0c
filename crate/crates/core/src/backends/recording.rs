use std::sync::{Arc, Mutex};

use super::{ChatBackend, ChatReply, ChatTurn, Result};

/// Wraps a chat backend and keeps every request and reply, in call order.
pub struct RecordingChat {
    inner: Arc<dyn ChatBackend>,
    log: Mutex<Vec<(Vec<ChatTurn>, Result<ChatReply>)>>,
}

impl RecordingChat {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<(Vec<ChatTurn>, Result<ChatReply>)> {
        self.log.lock().expect("recording lock").clone()
    }

    /// Text of the last user turn of each request.
    pub fn prompts(&self) -> Vec<String> {
        self.calls()
            .iter()
            .filter_map(|(h, _)| h.iter().rev().find(|t| t.role == super::Role::User).map(|t| t.text.clone()))
            .collect()
    }

    pub fn clear(&self) {
        self.log.lock().expect("recording lock").clear();
    }
}

impl ChatBackend for RecordingChat {
    fn chat(&self, history: &[ChatTurn]) -> Result<ChatReply> {
        let reply = self.inner.chat(history);
        self.log.lock().expect("recording lock").push((history.to_vec(), reply.clone()));
        reply
    }
}
