//! Admin upload: extraction up front, then summary, quiz and indexing stages.

use chrono::{DateTime, Utc};
use icls_core::domain::{StageError, UnitId, UnitKind, UnitStatus};
use icls_core::ingestion::{self, DocumentText, IngestError, Source, DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE};
use icls_core::llm::{render_quiz_prompt, LlmGateway};
use icls_core::treasury::{self, Summary};
use icls_core::worldwise::{self, Question, QuizError};
use icls_core::{Scribe64, VectorRecord64};
use serde::Deserialize;

use crate::error::ApiError;
use crate::model::{Change, State};

pub const STAGE_TREASURY: &str = "treasury";
pub const STAGE_WORLDWISE: &str = "worldwise";
pub const STAGE_SCRIBE: &str = "scribe";
pub const STAGE_PIPELINE: &str = "pipeline";

fn default_kind() -> UnitKind {
    UnitKind::Document
}

/// The `metadata` part of an upload.
#[derive(Debug, Clone, Deserialize)]
pub struct UploadMeta {
    pub country_id: icls_core::domain::CountryId,
    pub category: String,
    pub lesson_title: String,
    #[serde(default = "default_kind")]
    pub kind: UnitKind,
    #[serde(default)]
    pub source_name: Option<String>,
    #[serde(default)]
    pub instruction: String,
}

/// Decodes the uploaded file into normalized text.
pub fn extract(kind: UnitKind, file_name: &str, bytes: Vec<u8>, unit: UnitId) -> Result<DocumentText, ApiError> {
    let lower = file_name.to_ascii_lowercase();
    if [".pdf", ".doc", ".docx"].iter().any(|ext| lower.ends_with(ext)) {
        return Err(ApiError::invalid(
            "unsupported-format",
            format!("`{file_name}`: upload the extracted text instead"),
        ));
    }
    let source = match kind {
        UnitKind::Document => Source::PlainText(bytes),
        UnitKind::VideoTranscript => {
            let text = String::from_utf8(bytes).map_err(|e| IngestError::UndecodableBytes {
                offset: e.utf8_error().valid_up_to(),
            });
            match text {
                Ok(text) => Source::TranscriptLines(text.lines().map(str::to_string).collect()),
                Err(e) => return Err(ingest_error(e)),
            }
        }
    };
    ingestion::extract_text(source, unit).map_err(ingest_error)
}

fn ingest_error(e: IngestError) -> ApiError {
    let code = match e {
        IngestError::EmptySource => "empty-source",
        IngestError::UndecodableBytes { .. } => "undecodable-source",
        IngestError::InvalidParams { .. } => "invalid-chunking",
    };
    ApiError::invalid(code, format!("ingestion: {e}"))
}

/// What each generation stage produced.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub summary: Result<Summary, StageError>,
    pub questions: Result<Vec<Question>, StageError>,
    pub vectors: Result<Vec<VectorRecord64>, StageError>,
}

impl StageOutput {
    /// Every stage failed with the same error, e.g. a timeout.
    pub fn failed(stage: &str, message: &str) -> Self {
        let err = || StageError {
            stage: stage.to_string(),
            message: message.to_string(),
        };
        StageOutput {
            summary: Err(err()),
            questions: Err(err()),
            vectors: Err(err()),
        }
    }
}

fn stage_error(stage: &str, e: impl std::fmt::Display) -> StageError {
    StageError {
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

fn quiz_stage(gateway: &LlmGateway, text: &str) -> Result<Vec<Question>, StageError> {
    worldwise::generate_quiz(gateway, text)
        .map(|q| q.questions)
        .map_err(|e| match e {
            QuizError::Underfull { valid, best } => stage_error(
                STAGE_WORLDWISE,
                format!(
                    "quiz-underfull: {valid} valid questions, {} blocks rejected",
                    best.rejects.len()
                ),
            ),
            other => stage_error(STAGE_WORLDWISE, other),
        })
}

/// Runs the three stages concurrently. No state is touched.
///
/// A unit too long for one quiz prompt is quizzed on its accepted summary.
pub fn run_stages(gateway: &LlmGateway, scribe: &Scribe64, doc: &DocumentText, instruction: &str) -> StageOutput {
    let unit = doc.unit_id;
    let quiz_fits = render_quiz_prompt(&doc.text).is_ok_and(|p| gateway.fits(&p));
    std::thread::scope(|s| {
        let summary = s.spawn(|| {
            treasury::generate_summary(gateway, unit, &doc.text, instruction)
                .map_err(|e| stage_error(STAGE_TREASURY, e))
        });
        let early_quiz = quiz_fits.then(|| s.spawn(|| quiz_stage(gateway, &doc.text)));
        let vectors = s.spawn(|| {
            let chunks = ingestion::chunk(doc, DEFAULT_CHUNK_SIZE, DEFAULT_CHUNK_OVERLAP)
                .map_err(|e| stage_error(STAGE_SCRIBE, e))?;
            scribe
                .build_records(unit, &chunks)
                .map_err(|e| stage_error(STAGE_SCRIBE, e))
        });
        let panicked = |stage: &str| stage_error(stage, "stage panicked");
        let summary = summary.join().unwrap_or_else(|_| Err(panicked(STAGE_TREASURY)));
        let questions = match early_quiz {
            Some(handle) => handle.join().unwrap_or_else(|_| Err(panicked(STAGE_WORLDWISE))),
            None => match &summary {
                Ok(summary) => quiz_stage(gateway, &summary.text),
                Err(_) => Err(stage_error(
                    STAGE_WORLDWISE,
                    "unit exceeds the quiz prompt window and no summary was accepted",
                )),
            },
        };
        StageOutput {
            summary,
            questions,
            vectors: vectors.join().unwrap_or_else(|_| Err(panicked(STAGE_SCRIBE))),
        }
    })
}

/// Changes storing the stage results. The unit is published only when every stage succeeded.
pub fn finish(state: &State, unit: UnitId, output: StageOutput, now: DateTime<Utc>) -> Result<Vec<Change>, ApiError> {
    let mut record = state
        .catalog
        .units
        .get(&unit)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unit {unit} was removed during processing")))?;
    let mut changes = Vec::new();
    let mut errors = Vec::new();
    let mut complete = true;

    match output.summary {
        Ok(mut summary) => {
            let id = state.next_summary_id();
            summary.generated_at = now;
            record.summary_id = Some(id);
            changes.push(Change::AddSummary(id, summary));
        }
        Err(e) => {
            complete = false;
            errors.push(e);
        }
    }
    match output.questions {
        Ok(questions) => match worldwise::Quiz::new(state.next_quiz_id(), unit, questions) {
            Ok(quiz) => {
                record.quiz_id = Some(quiz.quiz_id);
                changes.push(Change::AddQuiz(quiz));
            }
            Err(e) => {
                complete = false;
                errors.push(stage_error(STAGE_WORLDWISE, e));
            }
        },
        Err(e) => {
            complete = false;
            errors.push(e);
        }
    }
    match output.vectors {
        Ok(records) => {
            record.indexed = true;
            changes.push(Change::ReplaceVectors(unit, records));
        }
        Err(e) => {
            complete = false;
            errors.push(e);
        }
    }
    record.status = if complete {
        UnitStatus::Published
    } else {
        UnitStatus::Draft
    };
    record.errors = errors;
    changes.push(Change::UpdateUnit(record));
    Ok(changes)
}
