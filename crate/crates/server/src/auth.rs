//! Password digests, session tokens and the request extractors that check them.

use std::sync::Arc;

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::http::StatusCode;
use icls_core::domain::LearnerId;
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::app::App;
use crate::error::ApiError;

pub const ADMIN_HEADER: &str = "x-admin-token";
const SALT_BYTES: usize = 16;
const TOKEN_BYTES: usize = 32;

fn digest(salt: &[u8], password: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update(password.as_bytes());
    hex::encode(hasher.finalize())
}

/// `sha256$<salt hex>$<digest hex>` with a fresh random salt.
pub fn hash_password(password: &str) -> String {
    let mut salt = [0u8; SALT_BYTES];
    rand::rng().fill_bytes(&mut salt);
    hash_password_with_salt(password, &salt)
}

pub fn hash_password_with_salt(password: &str, salt: &[u8]) -> String {
    format!("sha256${}${}", hex::encode(salt), digest(salt, password))
}

pub fn verify_password(stored: &str, password: &str) -> bool {
    let mut parts = stored.split('$');
    let (Some("sha256"), Some(salt), Some(expected), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return false;
    };
    let Ok(salt) = hex::decode(salt) else {
        return false;
    };
    constant_time_eq(digest(&salt, password).as_bytes(), expected.as_bytes())
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// 256 random bits, hex encoded.
pub fn new_token() -> String {
    let mut bytes = [0u8; TOKEN_BYTES];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn bearer(parts: &Parts) -> Option<&str> {
    let value = parts.headers.get(AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.trim().split_once(' ')?;
    scheme
        .eq_ignore_ascii_case("bearer")
        .then(|| token.trim())
        .filter(|t| !t.is_empty())
}

/// The learner behind an unexpired session token.
#[derive(Debug, Clone)]
pub struct AuthLearner {
    pub learner_id: LearnerId,
    pub token: String,
}

impl FromRequestParts<Arc<App>> for AuthLearner {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &Arc<App>) -> Result<Self, Self::Rejection> {
        let token = bearer(parts).ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        let now = app.now();
        let inner = app.lock();
        match inner.state.sessions.get(token) {
            Some(session) if session.expires_at > now => Ok(AuthLearner {
                learner_id: session.learner_id,
                token: token.to_string(),
            }),
            Some(_) => Err(ApiError::unauthorized("session expired")),
            None => Err(ApiError::unauthorized("unknown session token")),
        }
    }
}

/// A request carrying the admin bootstrap token.
#[derive(Debug, Clone, Copy)]
pub struct Admin;

impl FromRequestParts<Arc<App>> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &Arc<App>) -> Result<Self, Self::Rejection> {
        let Some(expected) = app.admin_token() else {
            return Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "admin-disabled",
                "no admin token is configured",
            ));
        };
        let supplied = parts
            .headers
            .get(ADMIN_HEADER)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ApiError::unauthorized("missing admin token"))?;
        if constant_time_eq(supplied.trim().as_bytes(), expected.as_bytes()) {
            Ok(Admin)
        } else {
            Err(ApiError::forbidden("admin token rejected"))
        }
    }
}
