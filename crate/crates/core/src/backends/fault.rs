use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, Completion, CompletionRequest};
use crate::parser::{parse_decomposition, DecompositionMode};
use crate::prompts::{detect_meta_task, MetaTask};

static FIRST_LIST_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"list:? ?\[([^\],\]]+)").unwrap());

/// Per-step probabilities of corrupting a completion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultRates {
    pub p_d: f64,
    pub p_u: f64,
    pub p_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultCounts {
    pub decompose: u64,
    pub unit: u64,
    pub merge: u64,
}

/// Wraps a backend and corrupts its answers with the configured per-step
/// probabilities. Draws are a hash of the seed, the prompt and how often that
/// prompt has been seen, so reruns inject the same faults.
pub struct FaultInjector<B> {
    inner: B,
    rates: FaultRates,
    seed: u64,
    seen: Mutex<HashMap<[u8; 32], u64>>,
    injected: [AtomicU64; 3],
}

impl<B: Backend> FaultInjector<B> {
    pub fn new(inner: B, rates: FaultRates, seed: u64) -> Self {
        FaultInjector {
            inner,
            rates,
            seed,
            seen: Mutex::new(HashMap::new()),
            injected: Default::default(),
        }
    }

    pub fn counts(&self) -> FaultCounts {
        FaultCounts {
            decompose: self.injected[0].load(Ordering::SeqCst),
            unit: self.injected[1].load(Ordering::SeqCst),
            merge: self.injected[2].load(Ordering::SeqCst),
        }
    }

    fn draw(&self, prompt: &str) -> f64 {
        let prompt_hash: [u8; 32] = Sha256::digest(prompt.as_bytes()).into();
        let occurrence = {
            let mut seen = self.seen.lock().unwrap();
            let n = seen.entry(prompt_hash).or_insert(0);
            *n += 1;
            *n
        };
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(prompt_hash);
        h.update(occurrence.to_le_bytes());
        let digest = h.finalize();
        let bits = u64::from_le_bytes(digest[..8].try_into().unwrap());
        (bits >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Appends a stray token to the tagged answer.
pub(crate) fn corrupt_answer(text: &str) -> String {
    match text.rfind("</ANSWER>") {
        Some(pos) => format!("{} #{}", &text[..pos], &text[pos..]),
        None => format!("{text} #"),
    }
}

/// Damages the first sub-problem: its list gains a duplicated first item,
/// or, when it holds no bracketed list, a stray token.
pub(crate) fn corrupt_decomposition(text: &str) -> String {
    let Some(line_start) = text
        .lines()
        .scan(0usize, |offset, line| {
            let start = *offset;
            *offset += line.len() + 1;
            Some((start, line))
        })
        .find(|(_, line)| line.trim_start().starts_with("- "))
        .map(|(start, _)| start)
    else {
        return format!("{text} #");
    };
    let line_end = text[line_start..]
        .find('\n')
        .map(|i| line_start + i)
        .unwrap_or(text.len());
    let line = &text[line_start..line_end];
    let damaged = match FIRST_LIST_ITEM.captures(line) {
        Some(c) => {
            let item = c.get(1).unwrap();
            let word = item.as_str().trim();
            format!("{}{word}, {}", &line[..item.start()], &line[item.start()..])
        }
        None => format!("{line} #"),
    };
    format!("{}{}{}", &text[..line_start], damaged, &text[line_end..])
}

impl<B: Backend> Backend for FaultInjector<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut completion = self.inner.complete(request)?;
        let Some(meta) = detect_meta_task(&request.prompt) else {
            return Ok(completion);
        };
        let (p, slot) = match meta {
            MetaTask::Decompose | MetaTask::DecomposeWithDeps => (self.rates.p_d, 0),
            MetaTask::UnitCoT | MetaTask::UnitLtM => (self.rates.p_u, 1),
            MetaTask::Merge => (self.rates.p_m, 2),
            MetaTask::Vote => return Ok(completion),
        };
        if meta.is_decomposition() {
            // only actual splits can be damaged
            let mode = if meta == MetaTask::Decompose {
                DecompositionMode::Independent
            } else {
                DecompositionMode::WithDependencies
            };
            match parse_decomposition(&completion.text, mode, usize::MAX) {
                Ok(r) if !r.is_unit() => {}
                _ => return Ok(completion),
            }
        }
        if p > 0.0 && self.draw(&request.prompt) < p {
            self.injected[slot].fetch_add(1, Ordering::SeqCst);
            completion.text = if meta.is_decomposition() {
                corrupt_decomposition(&completion.text)
            } else {
                corrupt_answer(&completion.text)
            };
        }
        Ok(completion)
    }

    fn name(&self) -> String {
        format!("fault-injector({})", self.inner.name())
    }
}
