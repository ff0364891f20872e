use std::sync::Arc;

use axum::extract::{Multipart, State as AppState};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;
use icls_core::domain::{
    Category, CategoryId, CategoryName, ContentUnit, Country, CountryId, LessonId, StageError, UnitId, UnitKind,
    UnitStatus,
};
use icls_core::ingestion::estimate_tokens;
use icls_core::worldwise::Quiz;
use serde::{Deserialize, Serialize};

use super::learning::SummaryView;
use super::{Body, Id};
use crate::app::App;
use crate::auth::Admin;
use crate::error::ApiError;
use crate::model::{Change, State, Story};
use crate::pipeline::{self, StageOutput, UploadMeta, STAGE_PIPELINE};

#[derive(Debug, Deserialize)]
pub struct NewCountry {
    pub name: String,
    #[serde(default)]
    pub categories: Vec<String>,
}

pub async fn create_country(
    AppState(app): AppState<Arc<App>>,
    _admin: Admin,
    Body(body): Body<NewCountry>,
) -> Result<impl IntoResponse, ApiError> {
    let name = body.name.trim().to_string();
    if name.is_empty() {
        return Err(ApiError::invalid("invalid-field", "country name must not be empty"));
    }
    let mut names: Vec<CategoryName> = Vec::new();
    for raw in &body.categories {
        let parsed: CategoryName = raw.parse()?;
        if !names.contains(&parsed) {
            names.push(parsed);
        }
    }
    let mut inner = app.lock();
    if inner.state.catalog.country_by_name(&name).is_some() {
        return Err(ApiError::conflict(
            "duplicate-country",
            format!("country `{name}` exists"),
        ));
    }
    let country_id = inner.state.next_country_id();
    let first_category = inner.state.next_category_id().0;
    let mut changes = vec![Change::AddCountry(Country {
        country_id,
        name,
        categories: Vec::new(),
    })];
    for (offset, category) in names.into_iter().enumerate() {
        changes.push(Change::AddCategory(Category {
            category_id: CategoryId(first_category + offset as i64),
            country_id,
            name: category,
            lessons: Vec::new(),
        }));
    }
    inner.commit(changes)?;
    Ok((
        StatusCode::CREATED,
        Json(inner.state.catalog.countries[&country_id].clone()),
    ))
}

/// Fails with 409 while learners, results or ledgers still reference the country.
pub async fn delete_country(
    AppState(app): AppState<Arc<App>>,
    _admin: Admin,
    Id(country): Id<CountryId>,
) -> Result<StatusCode, ApiError> {
    let mut inner = app.lock();
    if !inner.state.catalog.countries.contains_key(&country) {
        return Err(ApiError::not_found(format!("country {country}")));
    }
    inner.commit(vec![Change::RemoveCountry(country)])?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct NewStory {
    pub title: String,
    pub url: String,
    #[serde(default)]
    pub country_id: Option<CountryId>,
}

pub async fn create_story(
    AppState(app): AppState<Arc<App>>,
    _admin: Admin,
    Body(body): Body<NewStory>,
) -> Result<impl IntoResponse, ApiError> {
    let title = body.title.trim();
    if title.is_empty() {
        return Err(ApiError::invalid("invalid-field", "story title must not be empty"));
    }
    let url = body.url.trim();
    if !(url.starts_with("https://") || url.starts_with("http://")) {
        return Err(ApiError::invalid("invalid-field", "story url must be http(s)"));
    }
    let now = app.now();
    let mut inner = app.lock();
    if let Some(country) = body.country_id {
        if !inner.state.catalog.countries.contains_key(&country) {
            return Err(ApiError::not_found(format!("country {country}")));
        }
    }
    let story = Story {
        story_id: inner.state.next_story_id(),
        country_id: body.country_id,
        title: title.to_string(),
        url: url.to_string(),
        created_at: now,
    };
    inner.commit(vec![Change::AddStory(story.clone())])?;
    Ok((StatusCode::CREATED, Json(story)))
}

#[derive(Debug, Serialize)]
pub struct AdminUnitView {
    pub unit_id: UnitId,
    pub lesson_id: LessonId,
    pub category_id: CategoryId,
    pub country_id: CountryId,
    pub kind: UnitKind,
    pub source_name: String,
    pub status: UnitStatus,
    pub indexed: bool,
    pub errors: Vec<StageError>,
    pub text_chars: usize,
    pub token_estimate: usize,
    pub chunk_count: usize,
    pub summary: Option<SummaryView>,
    pub quiz: Option<Quiz>,
}

fn admin_view(state: &State, unit: UnitId) -> Result<AdminUnitView, ApiError> {
    let record = state
        .catalog
        .units
        .get(&unit)
        .ok_or_else(|| ApiError::not_found(format!("unit {unit}")))?;
    let category = state
        .catalog
        .category_of_unit(unit)
        .ok_or_else(|| ApiError::not_found(format!("unit {unit}")))?;
    Ok(AdminUnitView {
        unit_id: unit,
        lesson_id: record.lesson_id,
        category_id: category.category_id,
        country_id: category.country_id,
        kind: record.kind,
        source_name: record.source_name.clone(),
        status: record.status,
        indexed: record.indexed,
        errors: record.errors.clone(),
        text_chars: record.raw_text.chars().count(),
        token_estimate: estimate_tokens(&record.raw_text),
        chunk_count: state.scribe.store().record_count(unit),
        summary: state.summary_of_unit(unit).map(|s| SummaryView {
            unit_id: unit,
            text: s.text.clone(),
            word_count: s.word_count,
            strategy: s.strategy,
            generated_at: s.generated_at,
        }),
        quiz: state.quiz_of_unit(unit).cloned(),
    })
}

pub async fn unit_detail(
    AppState(app): AppState<Arc<App>>,
    _admin: Admin,
    Id(unit): Id<UnitId>,
) -> Result<Json<AdminUnitView>, ApiError> {
    Ok(Json(admin_view(&app.lock().state, unit)?))
}

/// Stores the extracted text as a draft unit, runs the generation stages and
/// publishes the unit when all of them succeed.
pub async fn upload_unit(
    AppState(app): AppState<Arc<App>>,
    _admin: Admin,
    mut multipart: Multipart,
) -> Result<impl IntoResponse, ApiError> {
    let mut meta: Option<UploadMeta> = None;
    let mut file: Option<(String, Vec<u8>)> = None;
    while let Some(field) = multipart.next_field().await? {
        match field.name() {
            Some("metadata") => {
                let text = field.text().await?;
                meta = Some(
                    serde_json::from_str(&text).map_err(|e| ApiError::invalid("invalid-metadata", e.to_string()))?,
                );
            }
            Some("file") => {
                let name = field.file_name().unwrap_or("upload.txt").to_string();
                file = Some((name, field.bytes().await?.to_vec()));
            }
            _ => {}
        }
    }
    let meta = meta.ok_or_else(|| ApiError::invalid("invalid-multipart", "missing `metadata` part"))?;
    let (file_name, bytes) = file.ok_or_else(|| ApiError::invalid("invalid-multipart", "missing `file` part"))?;
    let lesson_title = meta.lesson_title.trim().to_string();
    if lesson_title.is_empty() {
        return Err(ApiError::invalid("invalid-field", "lesson_title must not be empty"));
    }
    let category_name: CategoryName = meta.category.parse()?;

    let (doc, scribe) = {
        let mut inner = app.lock();
        let state = &inner.state;
        let country = meta.country_id;
        if !state.catalog.countries.contains_key(&country) {
            return Err(ApiError::not_found(format!("country {country}")));
        }
        let unit_id = state.next_unit_id();
        let doc = pipeline::extract(meta.kind, &file_name, bytes, unit_id)?;
        let mut changes = Vec::new();
        let category_id = match state.catalog.category_named(country, category_name) {
            Some(c) => c.category_id,
            None => {
                let id = state.next_category_id();
                changes.push(Change::AddCategory(Category {
                    category_id: id,
                    country_id: country,
                    name: category_name,
                    lessons: Vec::new(),
                }));
                id
            }
        };
        let existing = state.catalog.categories.get(&category_id).and_then(|c| {
            c.lessons
                .iter()
                .copied()
                .find(|l| state.catalog.lessons[l].title == lesson_title)
        });
        let lesson_id = match existing {
            Some(id) => id,
            None => {
                let id = state.next_lesson_id();
                changes.push(Change::AddLesson(icls_core::domain::Lesson {
                    lesson_id: id,
                    category_id,
                    title: lesson_title,
                    content_units: Vec::new(),
                }));
                id
            }
        };
        changes.push(Change::AddUnit(ContentUnit {
            unit_id,
            lesson_id,
            kind: meta.kind,
            source_name: meta.source_name.clone().unwrap_or_else(|| file_name.clone()),
            raw_text: doc.text.clone(),
            summary_id: None,
            quiz_id: None,
            indexed: false,
            status: UnitStatus::Draft,
            errors: Vec::new(),
        }));
        let scribe = state.scribe.clone();
        inner.commit(changes)?;
        (doc, scribe)
    };

    let unit = doc.unit_id;
    let gateway = app.gateway();
    let instruction = meta.instruction;
    let timeout = app.pipeline_timeout();
    let task = tokio::task::spawn_blocking(move || pipeline::run_stages(&gateway, &scribe, &doc, &instruction));
    let output = match tokio::time::timeout(timeout, task).await {
        Ok(Ok(output)) => output,
        Ok(Err(e)) => StageOutput::failed(STAGE_PIPELINE, &format!("worker failed: {e}")),
        Err(_) => StageOutput::failed(STAGE_PIPELINE, &format!("timed out after {} s", timeout.as_secs_f64())),
    };

    let now = app.now();
    let mut inner = app.lock();
    let changes = pipeline::finish(&inner.state, unit, output, now)?;
    inner.commit(changes)?;
    let view = admin_view(&inner.state, unit)?;
    tracing::info!(unit = %unit, status = ?view.status, errors = view.errors.len(), "unit processed");
    Ok((StatusCode::CREATED, Json(view)))
}
