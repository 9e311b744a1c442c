//! Reference agent served over an OpenAI-compatible `completions` endpoint.
//!
//! The context is rendered as ChatML, the action appended after the
//! `Action:\n` prefix, and the server is asked for per-token log-probabilities
//! of that prompt. Which tokens belong to the action is decided from character
//! offsets: a token counts when its start offset lies inside the action span.
//! Field mappings for both styles are described in `docs/remote_scoring.md`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompts::render_chatml;
use super::{AgentContext, MeanLogProb, ScorerBackend, ScorerError};
use crate::model::Action;
use crate::openai::{EndpointConfig, OpenAiClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogprobStyle {
    /// `echo: true, logprobs: 1`; reads `choices[0].logprobs.{tokens,token_logprobs,text_offset}`.
    Echo,
    /// vLLM `prompt_logprobs: 0`; reads `choices[0].prompt_logprobs`.
    PromptLogprobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteScorerConfig {
    pub endpoint: EndpointConfig,
    #[serde(default = "default_style")]
    pub style: LogprobStyle,
    #[serde(default = "default_true")]
    pub empty_think_block: bool,
}

fn default_style() -> LogprobStyle {
    LogprobStyle::Echo
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: OpenAiClient,
    style: LogprobStyle,
    empty_think_block: bool,
}

/// A prompt token with its character offset and log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptToken {
    pub offset: usize,
    pub text: String,
    pub logprob: Option<f64>,
}

impl RemoteScorer {
    pub fn new(cfg: RemoteScorerConfig) -> Result<Self, ScorerError> {
        Ok(Self {
            client: OpenAiClient::new(cfg.endpoint)?,
            style: cfg.style,
            empty_think_block: cfg.empty_think_block,
        })
    }

    fn request(&self, text: &str) -> Value {
        match self.style {
            LogprobStyle::Echo => json!({
                "prompt": text,
                "max_tokens": 1,
                "temperature": 0.0,
                "echo": true,
                "logprobs": 1,
            }),
            LogprobStyle::PromptLogprobs => json!({
                "prompt": text,
                "max_tokens": 1,
                "temperature": 0.0,
                "prompt_logprobs": 0,
            }),
        }
    }
}

/// Tokens from an echo-style response.
pub fn parse_echo(v: &Value) -> Result<Vec<PromptToken>, ScorerError> {
    let lp = v
        .pointer("/choices/0/logprobs")
        .ok_or_else(|| ScorerError::Protocol("missing choices[0].logprobs".into()))?;
    let arr = |k: &str| {
        lp.get(k)
            .and_then(Value::as_array)
            .ok_or_else(|| ScorerError::Protocol(format!("missing logprobs.{k}")))
    };
    let (tokens, lps, offs) = (arr("tokens")?, arr("token_logprobs")?, arr("text_offset")?);
    if tokens.len() != lps.len() || tokens.len() != offs.len() {
        return Err(ScorerError::Protocol("logprob arrays differ in length".into()));
    }
    tokens
        .iter()
        .zip(lps)
        .zip(offs)
        .map(|((t, l), o)| {
            Ok(PromptToken {
                offset: o
                    .as_u64()
                    .ok_or_else(|| ScorerError::Protocol("non-integer text_offset".into()))? as usize,
                text: t.as_str().unwrap_or_default().to_string(),
                logprob: l.as_f64(),
            })
        })
        .collect()
}

/// Tokens from a vLLM `prompt_logprobs` response. The first entry carries no
/// token text, so offsets are rebuilt backwards from the end of `prompt`.
pub fn parse_prompt_logprobs(v: &Value, prompt: &str) -> Result<Vec<PromptToken>, ScorerError> {
    let entries = v
        .pointer("/choices/0/prompt_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| ScorerError::Protocol("missing choices[0].prompt_logprobs".into()))?;
    let chars: Vec<char> = prompt.chars().collect();
    let mut out = Vec::with_capacity(entries.len());
    let mut end = chars.len();
    for entry in entries.iter().rev() {
        let Some(map) = entry.as_object() else {
            // the leading null entry: whatever text remains belongs to it
            out.push(PromptToken {
                offset: 0,
                text: chars[..end].iter().collect(),
                logprob: None,
            });
            end = 0;
            continue;
        };
        let here: String = chars[..end].iter().collect();
        let best = map
            .values()
            .filter_map(|e| {
                let text = e.get("decoded_token")?.as_str()?;
                let lp = e.get("logprob")?.as_f64()?;
                (!text.is_empty() && here.ends_with(text)).then(|| (text.to_string(), lp))
            })
            .max_by_key(|(t, _)| t.chars().count())
            .ok_or_else(|| ScorerError::Protocol("decoded tokens do not reproduce the prompt".into()))?;
        end -= best.0.chars().count();
        out.push(PromptToken {
            offset: end,
            text: best.0,
            logprob: Some(best.1),
        });
    }
    if end != 0 {
        return Err(ScorerError::Protocol("decoded tokens do not cover the prompt".into()));
    }
    out.reverse();
    Ok(out)
}

/// Mean log-probability over tokens whose start offset is in `[start, end)`,
/// skipping any reasoning span.
pub fn action_mean(tokens: &[PromptToken], start: usize, end: usize) -> Result<MeanLogProb, ScorerError> {
    let mut sum = 0.0;
    let mut n = 0;
    let mut in_think = false;
    for t in tokens.iter().filter(|t| t.offset >= start && t.offset < end) {
        if t.text.contains("<think>") {
            in_think = true;
        }
        if !in_think {
            sum += t
                .logprob
                .ok_or_else(|| ScorerError::Protocol(format!("no log-probability for action token {:?}", t.text)))?;
            n += 1;
        }
        if t.text.contains("</think>") {
            in_think = false;
        }
    }
    if n == 0 {
        return Err(ScorerError::Protocol("no tokens fall inside the action span".into()));
    }
    MeanLogProb::new(sum / n as f64, n)
}

impl ScorerBackend for RemoteScorer {
    fn id(&self) -> String {
        format!(
            "remote({},{},{:?},{})",
            self.client.config().base_url,
            self.client.config().model,
            self.style,
            self.empty_think_block
        )
    }

    fn mean_logprob(&self, context: &AgentContext, action: &Action) -> Result<MeanLogProb, ScorerError> {
        let prompt = render_chatml(context, self.empty_think_block);
        let text = format!("{prompt}{}", action.as_str());
        let start = prompt.chars().count();
        let end = start + action.as_str().chars().count();
        let resp = self.client.completions(self.request(&text))?;
        let tokens = match self.style {
            LogprobStyle::Echo => parse_echo(&resp)?,
            LogprobStyle::PromptLogprobs => parse_prompt_logprobs(&resp, &text)?,
        };
        action_mean(&tokens, start, end)
    }
}
