use std::sync::Arc;

use axum::extract::State as AppState;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;
use chrono::{DateTime, Utc};
use icls_core::domain::{
    CategoryId, CategoryName, CountryId, Enrollment, LearnerId, LessonId, ProgressState, UnitId, UnitKind,
};
use icls_core::proficiency::{compute_proficiency, EngagementStats};
use icls_core::ProficiencyScore64;
use serde::{Deserialize, Serialize};

use super::{Body, Id};
use crate::app::App;
use crate::auth::AuthLearner;
use crate::error::ApiError;
use crate::model::{Change, State};

#[derive(Debug, Serialize)]
pub struct CategorySummary {
    pub category_id: CategoryId,
    pub name: CategoryName,
    pub lesson_count: usize,
}

#[derive(Debug, Serialize)]
pub struct CountryView {
    pub country_id: CountryId,
    pub name: String,
    pub categories: Vec<CategorySummary>,
}

fn category_summaries(state: &State, country: CountryId) -> Vec<CategorySummary> {
    state.catalog.countries[&country]
        .categories
        .iter()
        .map(|id| {
            let category = &state.catalog.categories[id];
            CategorySummary {
                category_id: *id,
                name: category.name,
                lesson_count: state.catalog.published_lessons_of_category(*id).len(),
            }
        })
        .collect()
}

pub async fn countries(AppState(app): AppState<Arc<App>>) -> Json<Vec<CountryView>> {
    let inner = app.lock();
    let state = &inner.state;
    Json(
        state
            .catalog
            .countries
            .values()
            .map(|c| CountryView {
                country_id: c.country_id,
                name: c.name.clone(),
                categories: category_summaries(state, c.country_id),
            })
            .collect(),
    )
}

pub async fn categories(
    AppState(app): AppState<Arc<App>>,
    _auth: AuthLearner,
    Id(country): Id<CountryId>,
) -> Result<Json<Vec<CategorySummary>>, ApiError> {
    let inner = app.lock();
    if !inner.state.catalog.countries.contains_key(&country) {
        return Err(ApiError::not_found(format!("country {country}")));
    }
    Ok(Json(category_summaries(&inner.state, country)))
}

#[derive(Debug, Serialize)]
pub struct LessonSummary {
    pub lesson_id: LessonId,
    pub title: String,
    pub unit_count: usize,
    pub units_completed: usize,
    pub finished: bool,
}

fn lesson_summary(state: &State, learner: LearnerId, lesson: LessonId) -> LessonSummary {
    let units = state.catalog.published_units_of_lesson(lesson);
    let progress = |u: UnitId| state.progress(learner, u);
    LessonSummary {
        lesson_id: lesson,
        title: state.catalog.lessons[&lesson].title.clone(),
        unit_count: units.len(),
        units_completed: units
            .iter()
            .filter(|u| progress(**u) >= ProgressState::SummaryTested)
            .count(),
        finished: state.catalog.lesson_finished(lesson, progress),
    }
}

pub async fn lessons(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(category): Id<CategoryId>,
) -> Result<Json<Vec<LessonSummary>>, ApiError> {
    let inner = app.lock();
    let state = &inner.state;
    if !state.catalog.categories.contains_key(&category) {
        return Err(ApiError::not_found(format!("category {category}")));
    }
    Ok(Json(
        state
            .catalog
            .published_lessons_of_category(category)
            .into_iter()
            .map(|l| lesson_summary(state, auth.learner_id, l))
            .collect(),
    ))
}

#[derive(Debug, Serialize)]
pub struct UnitSummary {
    pub unit_id: UnitId,
    pub kind: UnitKind,
    pub source_name: String,
    pub progress: ProgressState,
    pub has_summary: bool,
    pub has_quiz: bool,
    pub indexed: bool,
}

#[derive(Debug, Serialize)]
pub struct LessonView {
    #[serde(flatten)]
    pub lesson: LessonSummary,
    pub category_id: CategoryId,
    pub country_id: CountryId,
    pub units: Vec<UnitSummary>,
}

pub async fn lesson(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(lesson): Id<LessonId>,
) -> Result<Json<LessonView>, ApiError> {
    let inner = app.lock();
    let state = &inner.state;
    let units = state.catalog.published_units_of_lesson(lesson);
    if units.is_empty() {
        return Err(ApiError::not_found(format!("lesson {lesson}")));
    }
    let record = &state.catalog.lessons[&lesson];
    Ok(Json(LessonView {
        lesson: lesson_summary(state, auth.learner_id, lesson),
        category_id: record.category_id,
        country_id: state.catalog.country_of_lesson(lesson).expect("lesson has a country"),
        units: units
            .into_iter()
            .map(|u| {
                let unit = &state.catalog.units[&u];
                UnitSummary {
                    unit_id: u,
                    kind: unit.kind,
                    source_name: unit.source_name.clone(),
                    progress: state.progress(auth.learner_id, u),
                    has_summary: unit.summary_id.is_some(),
                    has_quiz: unit.quiz_id.is_some(),
                    indexed: unit.indexed,
                }
            })
            .collect(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct EnrollRequest {
    pub country_id: CountryId,
}

#[derive(Debug, Serialize)]
pub struct EnrollmentView {
    pub country_id: CountryId,
    pub country_name: String,
    pub enrolled_at: DateTime<Utc>,
    pub units_total: usize,
    pub units_completed: usize,
    pub proficiency: ProficiencyScore64,
}

pub fn enrollment_view(state: &State, enrollment: &Enrollment) -> EnrollmentView {
    let units = state.catalog.published_units_of_country(enrollment.country_id);
    let key = (enrollment.learner_id, enrollment.country_id);
    let stats = state
        .engagement
        .get(&key)
        .cloned()
        .unwrap_or_else(|| EngagementStats::empty(key.0, key.1));
    EnrollmentView {
        country_id: enrollment.country_id,
        country_name: state
            .catalog
            .countries
            .get(&enrollment.country_id)
            .map(|c| c.name.clone())
            .unwrap_or_default(),
        enrolled_at: enrollment.enrolled_at,
        units_total: units.len(),
        units_completed: units
            .iter()
            .filter(|u| enrollment.progress(**u) >= ProgressState::SummaryTested)
            .count(),
        proficiency: compute_proficiency(&stats),
    }
}

pub async fn enroll(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Body(request): Body<EnrollRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let now = app.now();
    let mut inner = app.lock();
    let country = request.country_id;
    if !inner.state.catalog.countries.contains_key(&country) {
        return Err(ApiError::not_found(format!("country {country}")));
    }
    if inner.state.enrollments.contains_key(&(auth.learner_id, country)) {
        return Err(ApiError::conflict(
            "already-enrolled",
            format!("already enrolled in country {country}"),
        ));
    }
    let units = inner.state.catalog.published_units_of_country(country);
    let enrollment = Enrollment::new(auth.learner_id, country, units, now);
    inner.commit(vec![Change::AddEnrollment(enrollment.clone())])?;
    Ok((StatusCode::CREATED, Json(enrollment_view(&inner.state, &enrollment))))
}

pub async fn enrollments(AppState(app): AppState<Arc<App>>, auth: AuthLearner) -> Json<Vec<EnrollmentView>> {
    let inner = app.lock();
    let state = &inner.state;
    Json(
        state
            .learner_enrollments(auth.learner_id)
            .iter()
            .map(|e| enrollment_view(state, e))
            .collect(),
    )
}
