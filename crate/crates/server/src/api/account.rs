use std::sync::Arc;

use axum::extract::State as AppState;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;
use icls_core::domain::{normalize_email, DomainError, LearnerProfile, ProfileFields};
use serde::{Deserialize, Serialize};

use super::Body;
use crate::app::App;
use crate::auth::{hash_password, new_token, verify_password, AuthLearner};
use crate::error::ApiError;
use crate::model::{Change, Session};

pub async fn register(
    AppState(app): AppState<Arc<App>>,
    Body(fields): Body<ProfileFields>,
) -> Result<impl IntoResponse, ApiError> {
    fields.validate()?;
    let digest = hash_password(&fields.password);
    let now = app.now();
    let mut inner = app.lock();
    if !inner.state.catalog.countries.contains_key(&fields.immersion_country) {
        return Err(ApiError::invalid(
            "invalid-field",
            format!("immersion_country {} does not exist", fields.immersion_country),
        ));
    }
    if inner.state.emails.contains_key(&normalize_email(&fields.email)) {
        return Err(DomainError::DuplicateEmail.into());
    }
    let profile = LearnerProfile::from_fields(inner.state.next_learner_id(), &fields, digest, now)?;
    inner.commit(vec![Change::AddLearner(profile.clone())])?;
    tracing::info!(learner = %profile.learner_id, "registered");
    Ok((StatusCode::CREATED, Json(profile)))
}

#[derive(Debug, Deserialize)]
pub struct Credentials {
    pub email: String,
    pub password: String,
}

#[derive(Debug, Serialize)]
pub struct LoginResponse {
    pub token: String,
    pub learner_id: icls_core::domain::LearnerId,
    pub expires_at: chrono::DateTime<chrono::Utc>,
    pub streak: icls_core::gamification::Streak,
}

pub async fn login(
    AppState(app): AppState<Arc<App>>,
    Body(credentials): Body<Credentials>,
) -> Result<Json<LoginResponse>, ApiError> {
    let now = app.now();
    let mut inner = app.lock();
    let rejected = || ApiError::unauthorized("email or password is wrong");
    let learner = *inner
        .state
        .emails
        .get(&normalize_email(&credentials.email))
        .ok_or_else(rejected)?;
    let profile = &inner.state.learners[&learner];
    if !verify_password(&profile.password_digest, &credentials.password) {
        return Err(rejected());
    }
    let ledger = &inner.state.ledgers[&learner];
    let streak = ledger.plan_login(now);
    let session = Session {
        token: new_token(),
        learner_id: learner,
        expires_at: now + app.session_ttl(),
    };
    let mut changes: Vec<Change> = inner
        .state
        .sessions
        .values()
        .filter(|s| s.learner_id == learner && s.expires_at <= now)
        .map(|s| Change::RemoveSession(s.token.clone()))
        .collect();
    changes.push(Change::AddSession(session.clone()));
    if streak != ledger.streak() {
        changes.push(Change::SetStreak(learner, streak));
    }
    inner.commit(changes)?;
    Ok(Json(LoginResponse {
        token: session.token,
        learner_id: learner,
        expires_at: session.expires_at,
        streak,
    }))
}

pub async fn logout(AppState(app): AppState<Arc<App>>, auth: AuthLearner) -> Result<StatusCode, ApiError> {
    app.lock().commit(vec![Change::RemoveSession(auth.token)])?;
    Ok(StatusCode::NO_CONTENT)
}
