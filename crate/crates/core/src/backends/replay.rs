use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, CompletionRequest, UsageRecord};

/// One recorded call. Turns without a prompt are served strictly in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub completion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<UsageRecord>,
}

impl ReplayTurn {
    pub fn scripted(completion: impl Into<String>) -> Self {
        ReplayTurn {
            prompt: None,
            completion: completion.into(),
            usage: None,
        }
    }

    pub fn recorded(prompt: impl Into<String>, completion: impl Into<String>, usage: UsageRecord) -> Self {
        ReplayTurn {
            prompt: Some(prompt.into()),
            completion: completion.into(),
            usage: Some(usage),
        }
    }
}

/// Serves completions from a transcript.
///
/// A request takes the earliest unused turn recorded for the identical
/// prompt, falling back to the earliest unused turn. In strict mode the
/// earliest unused turn must have been recorded for the request's prompt.
pub struct ReplayBackend {
    turns: Vec<ReplayTurn>,
    used: Mutex<Vec<bool>>,
    strict: bool,
}

impl ReplayBackend {
    pub fn new(turns: Vec<ReplayTurn>) -> Self {
        let used = Mutex::new(vec![false; turns.len()]);
        ReplayBackend {
            turns,
            used,
            strict: false,
        }
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn remaining(&self) -> usize {
        self.used.lock().unwrap().iter().filter(|u| !**u).count()
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut used = self.used.lock().unwrap();
        let next = used
            .iter()
            .position(|u| !*u)
            .ok_or(BackendError::ReplayExhausted {
                turns: self.turns.len(),
            })?;
        let chosen = if self.strict {
            match &self.turns[next].prompt {
                Some(p) if *p != request.prompt => {
                    return Err(BackendError::ReplayMismatch { turn: next })
                }
                _ => next,
            }
        } else {
            (next..self.turns.len())
                .find(|&i| !used[i] && self.turns[i].prompt.as_deref() == Some(request.prompt.as_str()))
                .unwrap_or(next)
        };
        used[chosen] = true;
        let turn = &self.turns[chosen];
        let usage = turn
            .usage
            .unwrap_or_else(|| UsageRecord::estimate(&request.prompt, &turn.completion));
        Ok(Completion {
            text: turn.completion.clone(),
            usage,
        })
    }

    fn name(&self) -> String {
        "replay".into()
    }
}
