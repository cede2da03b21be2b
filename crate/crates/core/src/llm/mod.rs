//! LLM screening votes.
//!
//! A [`PromptTemplate`] renders a five-part prompt (scene, inclusion
//! criteria, optional exclusions, output instruction, article text).
//! Providers answer YES or NO followed by the passage that justified the
//! call; [`parse_response`] turns that into a bit. Unparseable answers count
//! as YES, in line with the "relevant or unclear" instruction, while provider
//! failures count as NO so that an outage cannot promote records.

mod batch;
mod provider;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use self::batch::{classify_batch, BatchConfig, BatchInput, JudgementSet};
pub use self::provider::{ChatProvider, ChatRequest, OpenAiChatConfig, OpenAiChatProvider, StubProvider};

pub const DEFAULT_OUTPUT_INSTRUCTION: &str = "Answer YES if the article is relevant or unclear. Answer NO if it is not. Then reproduce the exact context from the paper that contained the information on which basis you made the decision.";

/// Lead-in of the last prompt part; the reference text follows it.
pub const ARTICLE_MARKER: &str = "Here is the text of the article: ";

/// Separator placed between prompt parts.
pub const PART_SEPARATOR: &str = "\n\n";

/// Characters of the response searched for a clean verdict.
pub const VERDICT_WINDOW: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("prompt part {0} is empty")]
    EmptyPart(&'static str),
    #[error("reference text is empty")]
    EmptyReference,
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("provider rejected credentials: {0}")]
    Auth(String),
    #[error("provider rate limit: {0}")]
    RateLimited(String),
    #[error("provider transport: {0}")]
    Transport(String),
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
}

impl LlmError {
    pub fn retryable(&self) -> bool {
        matches!(self, Self::RateLimited(_) | Self::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub scene: String,
    pub criteria: String,
    #[serde(default)]
    pub exclusions: Option<String>,
    #[serde(default = "default_instruction")]
    pub output_instruction: String,
}

fn default_instruction() -> String {
    DEFAULT_OUTPUT_INSTRUCTION.to_string()
}

impl PromptTemplate {
    pub fn new(scene: impl Into<String>, criteria: impl Into<String>) -> Self {
        Self {
            scene: scene.into(),
            criteria: criteria.into(),
            exclusions: None,
            output_instruction: default_instruction(),
        }
    }

    pub fn with_exclusions(mut self, exclusions: impl Into<String>) -> Self {
        self.exclusions = Some(exclusions.into());
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.scene.trim().is_empty() {
            return Err(LlmError::EmptyPart("scene"));
        }
        if self.criteria.trim().is_empty() {
            return Err(LlmError::EmptyPart("criteria"));
        }
        if self.output_instruction.trim().is_empty() {
            return Err(LlmError::EmptyPart("output instruction"));
        }
        Ok(())
    }
}

/// The single prompt text for one reference. Reference text is included
/// whole.
pub fn render_prompt(template: &PromptTemplate, reference_text: &str) -> Result<String, LlmError> {
    template.validate()?;
    if reference_text.trim().is_empty() {
        return Err(LlmError::EmptyReference);
    }
    let mut parts: Vec<&str> = vec![template.scene.trim(), template.criteria.trim()];
    if let Some(ex) = template.exclusions.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
        parts.push(ex);
    }
    parts.push(template.output_instruction.trim());
    let mut prompt = parts.join(PART_SEPARATOR);
    prompt.push_str(PART_SEPARATOR);
    prompt.push_str(ARTICLE_MARKER);
    prompt.push_str(reference_text);
    Ok(prompt)
}

/// Hex SHA-256 of a rendered prompt.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    /// Verdict found at the start of the response.
    Clean,
    /// Verdict found later in the response.
    Salvaged,
    /// No verdict; counted as YES.
    Defaulted,
    /// The provider failed; counted as NO.
    DefaultedOnError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedVerdict {
    pub bit: u8,
    pub justification: String,
    pub status: ParseStatus,
}

fn verdict_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").expect("static regex"))
}

/// Read the verdict from a raw response. Never fails.
pub fn parse_response(raw: &str) -> ParsedVerdict {
    let window_end = raw.char_indices().nth(VERDICT_WINDOW).map_or(raw.len(), |(b, _)| b);
    let Some(m) = verdict_regex().find(raw) else {
        return ParsedVerdict {
            bit: 1,
            justification: raw.trim().to_string(),
            status: ParseStatus::Defaulted,
        };
    };
    let bit = u8::from(m.as_str().eq_ignore_ascii_case("yes"));
    let status = if m.end() <= window_end {
        ParseStatus::Clean
    } else {
        ParseStatus::Salvaged
    };
    let justification = raw[m.end()..]
        .trim_start_matches(|c: char| {
            c.is_whitespace() || matches!(c, '.' | ',' | ':' | ';' | '-' | '!' | '\u{2013}' | '\u{2014}')
        })
        .trim_end()
        .to_string();
    ParsedVerdict {
        bit,
        justification,
        status,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmJudgement {
    pub record_id: String,
    pub bit: u8,
    pub justification: String,
    pub model_id: String,
    pub prompt_hash: String,
    pub raw_response: String,
    pub parse_status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
