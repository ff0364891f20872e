//! The three prompt templates.
//!
//! Wording, spacing and typos are reproduced as-is. Templates are stored as
//! literal segments around named slots so a substituted value can never be
//! re-expanded as another slot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Summary,
    Quiz,
    Chat,
}

impl PromptKind {
    pub const ALL: [PromptKind; 3] = [PromptKind::Summary, PromptKind::Quiz, PromptKind::Chat];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Summary => "summary",
            PromptKind::Quiz => "quiz",
            PromptKind::Chat => "chat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("prompt data is empty")]
    EmptyData,
    #[error("no context chunks supplied")]
    NoContext,
    #[error("question is empty")]
    EmptyQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Data,
    UserPrompt,
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Text(&'static str),
    Slot(Slot),
}

use Segment::{Slot as S, Text as T};

const SUMMARY: &[Segment] = &[
    T(
        "Instruction: You are a summary generator, your job is to generate a summary of the given data.\n\
       You have to follow the instructions given on how to generate the summary.\n\
       If no instruction is given,then just generate the summary.\n\
       Data: ",
    ),
    S(Slot::Data),
    T(" User Instruction: "),
    S(Slot::UserPrompt),
    T("\nInstruction: The summary should be at least 200 words long\nSummary:"),
];

const QUIZ: &[Segment] = &[
    T("Generate a quiz based on the following information: Data: "),
    S(Slot::Data),
    T("\nInstructions :\n\
       1. Generate a quiz based on the given information.\n\
       2. The quiz should be at least 10 questions long.\n\
       3. The quiz should be in the form of a list of questions and options.\n\
       Format of the quiz:\n\
       Each question should be start with *Question :**\n\
       Option should be start with *Option :**\n\
       Each answer should be like *Answer :** and only give the option number for the answer\n\
       Options: 1, 2, 3, 4\n\
       Answer: Answer"),
];

const CHAT: &[Segment] = &[
    T("Role: You are a Question Answer solver. Here is the information:\nData: "),
    S(Slot::Data),
    T("\nUsing this information, answer the following question:\nQuestion: "),
    S(Slot::UserPrompt),
    T("\nInstruction: Answer the question using information provided in data.\nAnswer::"),
];

/// Line appended to the admin instruction when a summary comes back too short.
pub const SUMMARY_LENGTH_REMINDER: &str = "The summary should be at least 200 words long";

fn render(template: &[Segment], data: &str, user_prompt: &str) -> String {
    let mut out = String::with_capacity(data.len() + user_prompt.len() + 1024);
    for segment in template {
        match segment {
            Segment::Text(t) => out.push_str(t),
            Segment::Slot(Slot::Data) => out.push_str(data),
            Segment::Slot(Slot::UserPrompt) => out.push_str(user_prompt),
        }
    }
    out
}

pub fn render_summary_prompt(combined_text: &str, user_instruction: &str) -> Result<String, TemplateError> {
    if combined_text.trim().is_empty() {
        return Err(TemplateError::EmptyData);
    }
    Ok(render(SUMMARY, combined_text, user_instruction))
}

pub fn render_quiz_prompt(combined_text: &str) -> Result<String, TemplateError> {
    if combined_text.trim().is_empty() {
        return Err(TemplateError::EmptyData);
    }
    Ok(render(QUIZ, combined_text, ""))
}

/// Joins the chunks with blank lines into the data slot.
pub fn render_chat_prompt<S: AsRef<str>>(context_chunks: &[S], user_question: &str) -> Result<String, TemplateError> {
    if context_chunks.is_empty() {
        return Err(TemplateError::NoContext);
    }
    if user_question.trim().is_empty() {
        return Err(TemplateError::EmptyQuestion);
    }
    let data = context_chunks
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(render(CHAT, &data, user_question))
}

/// Extracts the text placed in the `Data:` slot of a rendered prompt.
///
/// Used by the mock provider to echo material back; returns `None` for text
/// that is not a rendered template.
pub fn data_slot(kind: PromptKind, prompt: &str) -> Option<&str> {
    let (lead, trail) = match kind {
        PromptKind::Summary => (SUMMARY[0], SUMMARY[2]),
        PromptKind::Quiz => (QUIZ[0], QUIZ[2]),
        PromptKind::Chat => (CHAT[0], CHAT[2]),
    };
    let (Segment::Text(lead), Segment::Text(trail)) = (lead, trail) else {
        return None;
    };
    let rest = prompt.strip_prefix(lead)?;
    let end = rest.rfind(trail)?;
    Some(&rest[..end])
}
