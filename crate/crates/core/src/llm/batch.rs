use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    parse_response, prompt_hash, render_prompt, ChatProvider, ChatRequest, LlmError, LlmJudgement, ParseStatus,
    PromptTemplate,
};
use crate::retrieval::{Clock, RateGate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub max_concurrency: usize,
    /// Attempts per record for rate-limit and transport failures.
    pub max_attempts: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    /// Minimum spacing between request starts across all workers.
    pub min_interval_ms: u64,
    pub max_tokens: u32,
    pub system_prompt: Option<String>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            max_concurrency: 4,
            max_attempts: 3,
            backoff_ms: 1000,
            min_interval_ms: 0,
            max_tokens: 512,
            system_prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchInput {
    pub record_id: String,
    pub text: String,
}

impl BatchInput {
    pub fn new(record_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            record_id: record_id.into(),
            text: text.into(),
        }
    }
}

/// Classify every input. Returns one judgement per input, in input order.
/// Only an invalid template fails the batch; per-record failures become
/// `defaulted_on_error` judgements with bit 0.
pub fn classify_batch(
    inputs: &[BatchInput],
    template: &PromptTemplate,
    provider: &dyn ChatProvider,
    config: &BatchConfig,
    clock: &dyn Clock,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<Vec<LlmJudgement>, LlmError> {
    template.validate()?;
    let workers = config.max_concurrency.clamp(1, inputs.len().max(1));
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let gate = Mutex::new(RateGate::new(Duration::from_millis(config.min_interval_ms)));
    let results: Mutex<Vec<Option<LlmJudgement>>> = Mutex::new(vec![None; inputs.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(input) = inputs.get(i) else { break };
                let judgement = classify_one(input, template, provider, config, clock, &gate);
                results.lock().expect("results lock")[i] = Some(judgement);
                progress(done.fetch_add(1, Ordering::SeqCst) + 1);
            });
        }
    });

    Ok(results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|j| j.expect("every input classified"))
        .collect())
}

fn classify_one(
    input: &BatchInput,
    template: &PromptTemplate,
    provider: &dyn ChatProvider,
    config: &BatchConfig,
    clock: &dyn Clock,
    gate: &Mutex<RateGate>,
) -> LlmJudgement {
    let failed = |hash: String, error: &LlmError| LlmJudgement {
        record_id: input.record_id.clone(),
        bit: 0,
        justification: String::new(),
        model_id: provider.model_id().to_string(),
        prompt_hash: hash,
        raw_response: String::new(),
        parse_status: ParseStatus::DefaultedOnError,
        error: Some(error.to_string()),
    };
    let prompt = match render_prompt(template, &input.text) {
        Ok(p) => p,
        Err(e) => return failed(String::new(), &e),
    };
    let hash = prompt_hash(&prompt);
    let request = ChatRequest {
        system: config.system_prompt.clone(),
        user: prompt,
        temperature: 0.0,
        max_tokens: config.max_tokens,
    };
    let mut attempt = 0;
    loop {
        attempt += 1;
        gate.lock().expect("rate gate lock").wait(clock);
        match provider.complete(&request) {
            Ok(raw) => {
                let v = parse_response(&raw);
                return LlmJudgement {
                    record_id: input.record_id.clone(),
                    bit: v.bit,
                    justification: v.justification,
                    model_id: provider.model_id().to_string(),
                    prompt_hash: hash,
                    raw_response: raw,
                    parse_status: v.status,
                    error: None,
                };
            }
            Err(e) if e.retryable() && attempt < config.max_attempts.max(1) => {
                tracing::warn!(record = %input.record_id, attempt, error = %e, "retrying LLM request");
                clock.sleep(Duration::from_millis(config.backoff_ms) * 2u32.pow(attempt - 1));
            }
            Err(e) => {
                tracing::warn!(record = %input.record_id, error = %e, "LLM request failed");
                return failed(hash, &e);
            }
        }
    }
}

/// A saved, reusable set of judgements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgementSet {
    pub model_id: String,
    pub template: PromptTemplate,
    pub judgements: Vec<LlmJudgement>,
}

impl JudgementSet {
    pub fn bits(&self) -> HashMap<String, u8> {
        self.judgements.iter().map(|j| (j.record_id.clone(), j.bit)).collect()
    }

    pub fn status_counts(&self) -> HashMap<ParseStatus, usize> {
        let mut m = HashMap::new();
        for j in &self.judgements {
            *m.entry(j.parse_status).or_insert(0) += 1;
        }
        m
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
