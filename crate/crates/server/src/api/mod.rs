//! Routes under `/api/v1`.

mod account;
mod admin;
mod catalog;
mod learning;
mod social;

use std::sync::Arc;

use axum::extract::{FromRequest, FromRequestParts, Request};
use axum::http::request::Parts;
use axum::routing::{delete, get, post};
use axum::Router;
use icls_core::domain::{ContentUnit, CountryId, Enrollment, LearnerId, UnitId};
use serde::de::DeserializeOwned;

use crate::app::App;
use crate::error::ApiError;
use crate::model::State;

pub const BASE_PATH: &str = "/api/v1";

pub fn router(app: Arc<App>) -> Router {
    let v1 = Router::new()
        .route("/auth/register", post(account::register))
        .route("/auth/login", post(account::login))
        .route("/auth/logout", post(account::logout))
        .route("/countries", get(catalog::countries))
        .route("/countries/{id}/categories", get(catalog::categories))
        .route("/categories/{id}/lessons", get(catalog::lessons))
        .route("/lessons/{id}", get(catalog::lesson))
        .route("/lessons/{id}/quiz", get(learning::lesson_quizzes))
        .route("/enrollments", get(catalog::enrollments).post(catalog::enroll))
        .route("/units/{id}/watch", post(learning::watch))
        .route("/units/{id}/summary", get(learning::summary))
        .route("/units/{id}/quiz", get(learning::unit_quiz))
        .route("/units/{id}/chat", post(learning::chat))
        .route(
            "/units/{id}/practice",
            get(learning::practice_question).post(learning::practice_answer),
        )
        .route("/quizzes/{id}/submit", post(learning::submit))
        .route("/quiz/{id}/submit", post(learning::submit))
        .route("/leaderboard", get(social::leaderboard))
        .route("/profile", get(social::profile))
        .route("/recommendations", get(social::recommendations))
        .route("/friends", get(social::friends))
        .route("/friends/requests", post(social::send_request))
        .route("/friends/requests/{id}/accept", post(social::accept_request))
        .route("/friends/requests/{id}/decline", post(social::decline_request))
        .route("/daily-challenge", get(social::daily_challenge))
        .route("/daily-challenge/claim", post(social::claim_daily_challenge))
        .route("/stories", get(social::stories))
        .route("/admin/countries", post(admin::create_country))
        .route("/admin/countries/{id}", delete(admin::delete_country))
        .route("/admin/stories", post(admin::create_story))
        .route("/admin/units", post(admin::upload_unit))
        .route("/admin/units/{id}", get(admin::unit_detail));
    Router::new()
        .nest(BASE_PATH, v1)
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(app)
}

/// JSON body whose rejections use the API error shape.
pub struct Body<T>(pub T);

impl<T, S> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let axum::Json(value) = axum::Json::<T>::from_request(req, state).await?;
        Ok(Body(value))
    }
}

/// Path parameters whose rejections use the API error shape.
pub struct Id<T>(pub T);

impl<T, S> FromRequestParts<S> for Id<T>
where
    T: DeserializeOwned + Send,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        let axum::extract::Path(value) = axum::extract::Path::<T>::from_request_parts(parts, state).await?;
        Ok(Id(value))
    }
}

/// Query string whose rejections use the API error shape.
pub struct Params<T>(pub T);

impl<T, S> FromRequestParts<S> for Params<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        let axum::extract::Query(value) = axum::extract::Query::<T>::from_request_parts(parts, state).await?;
        Ok(Params(value))
    }
}

/// Runs blocking work (LLM calls) off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn published_unit(state: &State, unit: UnitId) -> Result<&ContentUnit, ApiError> {
    state
        .catalog
        .units
        .get(&unit)
        .filter(|u| u.is_published())
        .ok_or_else(|| ApiError::not_found(format!("unit {unit}")))
}

/// The enrollment covering a published unit.
fn enrollment_for_unit(state: &State, learner: LearnerId, unit: UnitId) -> Result<(CountryId, &Enrollment), ApiError> {
    published_unit(state, unit)?;
    let country = state
        .catalog
        .country_of_unit(unit)
        .ok_or_else(|| ApiError::not_found(format!("unit {unit}")))?;
    let enrollment = state.enrollments.get(&(learner, country)).ok_or_else(|| {
        ApiError::new(
            axum::http::StatusCode::FORBIDDEN,
            "not-enrolled",
            format!("enroll in country {country} first"),
        )
    })?;
    Ok((country, enrollment))
}

fn learner_name(state: &State, learner: LearnerId) -> String {
    state.learners.get(&learner).map(|p| p.name.clone()).unwrap_or_default()
}
