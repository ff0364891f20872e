//! Thematic summaries for content units.
//!
//! A unit whose rendered summary prompt fits the model window is summarized
//! in one call. Larger units are split into window-sized chunks, each chunk is
//! summarized, and the joined partial summaries are summarized again with the
//! same template until the final prompt fits. The final candidate must reach
//! [`MIN_SUMMARY_WORDS`]; a short result is re-prompted once with the length
//! instruction repeated.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::UnitId;
use crate::ingestion::{chunk, DocumentText, IngestError};
use crate::llm::templates::SUMMARY_LENGTH_REMINDER;
use crate::llm::{render_summary_prompt, LlmError, LlmGateway, PromptKind};

pub const MIN_SUMMARY_WORDS: usize = 200;

/// Depth limit for repeated reduce passes.
const MAX_REDUCE_ROUNDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStrategy {
    SinglePass,
    MapReduce,
}

impl SummaryStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            SummaryStrategy::SinglePass => "single_pass",
            SummaryStrategy::MapReduce => "map_reduce",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub unit_id: UnitId,
    pub text: String,
    pub word_count: usize,
    pub strategy: SummaryStrategy,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SummaryVerdict {
    Accepted { word_count: usize },
    Rejected { reason: RejectReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    Empty,
    TooShort { word_count: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreasuryError {
    #[error("unit text is empty")]
    EmptyUnit,
    #[error("summary too short after retry ({} words)", best.split_whitespace().count())]
    GenerationTooShort { best: String, strategy: SummaryStrategy },
    #[error("summaries do not shrink below the context window")]
    ReduceDiverged,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn validate_summary(text: &str) -> SummaryVerdict {
    if text.trim().is_empty() {
        return SummaryVerdict::Rejected {
            reason: RejectReason::Empty,
        };
    }
    let word_count = word_count(text);
    if word_count < MIN_SUMMARY_WORDS {
        SummaryVerdict::Rejected {
            reason: RejectReason::TooShort { word_count },
        }
    } else {
        SummaryVerdict::Accepted { word_count }
    }
}

/// Which strategy `generate_summary` will pick for this text and instruction.
pub fn plan_strategy(gateway: &LlmGateway, text: &str, instruction: &str) -> Result<SummaryStrategy, TreasuryError> {
    let prompt = render_summary_prompt(text, instruction).map_err(|_| TreasuryError::EmptyUnit)?;
    Ok(if gateway.fits(&prompt) {
        SummaryStrategy::SinglePass
    } else {
        SummaryStrategy::MapReduce
    })
}

pub fn generate_summary(
    gateway: &LlmGateway,
    unit_id: UnitId,
    raw_text: &str,
    admin_instruction: &str,
) -> Result<Summary, TreasuryError> {
    if raw_text.trim().is_empty() {
        return Err(TreasuryError::EmptyUnit);
    }
    let strategy = plan_strategy(gateway, raw_text, admin_instruction)?;
    let data = match strategy {
        SummaryStrategy::SinglePass => raw_text.to_string(),
        SummaryStrategy::MapReduce => reduce_to_fit(gateway, unit_id, raw_text, admin_instruction)?,
    };

    let first = summarize(gateway, &data, admin_instruction)?;
    let text = match validate_summary(&first) {
        SummaryVerdict::Accepted { .. } => first,
        SummaryVerdict::Rejected { .. } => {
            let instruction = if admin_instruction.trim().is_empty() {
                SUMMARY_LENGTH_REMINDER.to_string()
            } else {
                format!("{admin_instruction} {SUMMARY_LENGTH_REMINDER}")
            };
            let second = summarize(gateway, &data, &instruction)?;
            match validate_summary(&second) {
                SummaryVerdict::Accepted { .. } => second,
                SummaryVerdict::Rejected { .. } => {
                    let best = if word_count(&second) > word_count(&first) {
                        second
                    } else {
                        first
                    };
                    return Err(TreasuryError::GenerationTooShort { best, strategy });
                }
            }
        }
    };
    Ok(Summary {
        unit_id,
        word_count: word_count(&text),
        text,
        strategy,
        generated_at: Utc::now(),
    })
}

fn summarize(gateway: &LlmGateway, data: &str, instruction: &str) -> Result<String, TreasuryError> {
    let prompt = render_summary_prompt(data, instruction).map_err(|_| TreasuryError::EmptyUnit)?;
    Ok(gateway.complete_prompt(PromptKind::Summary, prompt)?.text)
}

/// Map phase (and repeated reduce passes) until the joined partial summaries
/// fit in a single summary prompt.
fn reduce_to_fit(
    gateway: &LlmGateway,
    unit_id: UnitId,
    raw_text: &str,
    instruction: &str,
) -> Result<String, TreasuryError> {
    let config = gateway.config();
    let overhead = gateway.estimate(&render_summary_prompt(".", instruction).map_err(|_| TreasuryError::EmptyUnit)?);
    let budget = config
        .context_window
        .saturating_sub(config.reply_reserve)
        .saturating_sub(overhead);
    if budget < 2 {
        return Err(LlmError::ContextOverflow {
            prompt_tokens: overhead,
            reply_reserve: config.reply_reserve,
            window: config.context_window,
        }
        .into());
    }

    let mut data = raw_text.to_string();
    for _ in 0..MAX_REDUCE_ROUNDS {
        let doc = DocumentText::from_normalized(unit_id, data.clone())?;
        let parts = chunk(&doc, budget, 0)?;
        let partials = parts
            .iter()
            .map(|part| summarize(gateway, &part.text, instruction))
            .collect::<Result<Vec<_>, _>>()?;
        let joined = partials.join("\n\n");
        if gateway.fits(&render_summary_prompt(&joined, instruction).map_err(|_| TreasuryError::EmptyUnit)?) {
            return Ok(joined);
        }
        if joined.len() >= data.len() {
            return Err(TreasuryError::ReduceDiverged);
        }
        data = joined;
    }
    Err(TreasuryError::ReduceDiverged)
}
