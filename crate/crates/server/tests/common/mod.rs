#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, TimeZone, Utc};
use http_body_util::BodyExt;
use icls_core::llm::{GatewayConfig, LlmGateway};
use icls_server::app::{App, AppOptions};
use icls_server::clock::ManualClock;
use icls_server::db::{Database, DbError};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub const ADMIN_TOKEN: &str = "bootstrap-secret";
pub const PASSWORD: &str = "correct horse battery";

pub fn start_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap()
}

pub fn fast_gateway(provider: Arc<dyn icls_core::llm::CompletionProvider>) -> LlmGateway {
    LlmGateway::new(
        provider,
        GatewayConfig {
            backoff_base: Duration::ZERO,
            ..GatewayConfig::default()
        },
    )
}

pub struct Harness {
    pub app: Arc<App>,
    pub router: Router,
    pub clock: Arc<ManualClock>,
    pub db_path: PathBuf,
    pub learner_responses: Arc<AtomicUsize>,
    dir: Arc<TempDir>,
}

impl Harness {
    pub fn new() -> Self {
        Self::with(LlmGateway::mock(), AppOptions::default())
    }

    pub fn with(gateway: LlmGateway, options: AppOptions) -> Self {
        let dir = Arc::new(TempDir::new().unwrap());
        let db_path = dir.path().join("icls.db");
        let clock = Arc::new(ManualClock::new(start_time()));
        Self::open(dir, db_path, clock, gateway, options).unwrap()
    }

    fn open(
        dir: Arc<TempDir>,
        db_path: PathBuf,
        clock: Arc<ManualClock>,
        gateway: LlmGateway,
        mut options: AppOptions,
    ) -> Result<Self, DbError> {
        options.admin_token = Some(ADMIN_TOKEN.to_string());
        let db = Database::open(&db_path)?;
        let app = Arc::new(App::new(db, gateway, clock.clone(), options)?);
        Ok(Harness {
            router: icls_server::router(app.clone()),
            app,
            clock,
            db_path,
            learner_responses: Arc::new(AtomicUsize::new(0)),
            dir,
        })
    }

    /// A fresh process over the same database file.
    pub fn reopen(&self) -> Result<Harness, DbError> {
        Self::open(
            self.dir.clone(),
            self.db_path.clone(),
            self.clock.clone(),
            LlmGateway::mock(),
            AppOptions::default(),
        )
    }

    pub async fn send(&self, request: Request<Body>) -> (StatusCode, String) {
        let response = self.router.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn json_call(
        &self,
        method: Method,
        path: &str,
        token: Option<&str>,
        admin: bool,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let mut builder = Request::builder().method(method).uri(format!("/api/v1{path}"));
        if let Some(token) = token {
            builder = builder.header("authorization", format!("Bearer {token}"));
        }
        if admin {
            builder = builder.header("x-admin-token", ADMIN_TOKEN);
        }
        let request = match body {
            Some(body) => builder
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
            None => builder.body(Body::empty()).unwrap(),
        };
        let (status, text) = self.send(request).await;
        if !admin {
            self.learner_responses.fetch_add(1, Ordering::Relaxed);
            assert!(
                !text.contains("answer_index"),
                "learner response for {path} leaks the answer key: {text}"
            );
        }
        let value = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or_else(|_| panic!("non-JSON body for {path}: {text}"))
        };
        if !status.is_success() {
            assert!(
                value["error"]["code"].is_string() && value["error"]["message"].is_string(),
                "error body for {path} lacks the error shape: {text}"
            );
        }
        (status, value)
    }

    pub async fn get(&self, path: &str, token: &str) -> (StatusCode, Value) {
        self.json_call(Method::GET, path, Some(token), false, None).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> (StatusCode, Value) {
        self.json_call(Method::POST, path, Some(token), false, Some(body)).await
    }

    pub async fn public_get(&self, path: &str) -> (StatusCode, Value) {
        self.json_call(Method::GET, path, None, false, None).await
    }

    pub async fn public_post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.json_call(Method::POST, path, None, false, Some(body)).await
    }

    pub async fn admin_get(&self, path: &str) -> (StatusCode, Value) {
        self.json_call(Method::GET, path, None, true, None).await
    }

    pub async fn admin_post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.json_call(Method::POST, path, None, true, Some(body)).await
    }

    pub async fn admin_delete(&self, path: &str) -> (StatusCode, Value) {
        self.json_call(Method::DELETE, path, None, true, None).await
    }

    pub async fn upload_raw(&self, metadata: &str, file_name: &str, bytes: &[u8]) -> (StatusCode, Value) {
        let boundary = "icls-test-boundary";
        let mut body = Vec::new();
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"metadata\"\r\n\
                 Content-Type: application/json\r\n\r\n{metadata}\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\n\
                 Content-Type: text/plain\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
        let request = Request::builder()
            .method(Method::POST)
            .uri("/api/v1/admin/units")
            .header("x-admin-token", ADMIN_TOKEN)
            .header("content-type", format!("multipart/form-data; boundary={boundary}"))
            .body(Body::from(body))
            .unwrap();
        let (status, text) = self.send(request).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    pub async fn upload(&self, country: i64, category: &str, lesson: &str, text: &str) -> Value {
        let meta = json!({ "country_id": country, "category": category, "lesson_title": lesson });
        let (status, body) = self.upload_raw(&meta.to_string(), "lesson.txt", text.as_bytes()).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body
    }

    pub async fn create_country(&self, name: &str, categories: &[&str]) -> i64 {
        let (status, body) = self
            .admin_post("/admin/countries", json!({ "name": name, "categories": categories }))
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["country_id"].as_i64().unwrap()
    }

    pub async fn register(&self, name: &str, email: &str, country: i64, org: Option<&str>) -> i64 {
        let (status, body) = self
            .public_post(
                "/auth/register",
                json!({
                    "name": name,
                    "email": email,
                    "password": PASSWORD,
                    "immersion_country": country,
                    "learning_motivation": "travel",
                    "self_rated_knowledge": 2,
                    "daily_goal_minutes": 15,
                    "notifications_opt_in": true,
                    "org_id": org,
                }),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["learner_id"].as_i64().unwrap()
    }

    pub async fn login(&self, email: &str) -> String {
        let (status, body) = self
            .public_post("/auth/login", json!({ "email": email, "password": PASSWORD }))
            .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["token"].as_str().unwrap().to_string()
    }

    /// Registers, logs in and enrolls in `country`.
    pub async fn learner(&self, name: &str, country: i64, org: Option<&str>) -> (i64, String) {
        let email = format!("{}@example.org", name.to_lowercase());
        let id = self.register(name, &email, country, org).await;
        let token = self.login(&email).await;
        let (status, body) = self
            .post("/enrollments", &token, json!({ "country_id": country }))
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        (id, token)
    }

    /// The answer key of a unit's quiz, read through the admin view.
    pub async fn answer_key(&self, unit: i64) -> Vec<u8> {
        let (status, body) = self.admin_get(&format!("/admin/units/{unit}")).await;
        assert_eq!(status, StatusCode::OK);
        body["quiz"]["questions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|q| q["answer_index"].as_u64().unwrap() as u8)
            .collect()
    }

    pub async fn quiz_id(&self, unit: i64) -> i64 {
        let (_, body) = self.admin_get(&format!("/admin/units/{unit}")).await;
        body["quiz"]["quiz_id"].as_i64().unwrap()
    }

    /// Submits `key`-correct answers for the first `correct` questions and wrong ones after.
    pub async fn submit(&self, token: &str, unit: i64, correct: usize) -> (StatusCode, Value) {
        let key = self.answer_key(unit).await;
        let quiz = self.quiz_id(unit).await;
        let answers: serde_json::Map<String, Value> = key
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let choice = if i < correct { *a } else { a % 4 + 1 };
                (i.to_string(), json!(choice))
            })
            .collect();
        self.post(&format!("/quizzes/{quiz}/submit"), token, json!({ "answers": answers }))
            .await
    }

    pub fn db_path(&self) -> &std::path::Path {
        &self.db_path
    }
}

const SENTENCES: &[&str] = &[
    "The tea ceremony values harmony, respect, purity and tranquility in every gesture.",
    "Guests bow before entering the tea room through a low doorway that humbles everyone equally.",
    "Seasonal sweets are served before the whisked matcha to balance its bitterness.",
    "Kabuki theatre grew in Edo and is known for dramatic makeup and elaborate costumes.",
    "Cherry blossom viewing gathers families under flowering trees each spring.",
    "Shoes are removed at the entrance of homes, temples and many traditional restaurants.",
    "Bowing replaces handshakes, and the depth of the bow signals the level of respect.",
    "Festivals called matsuri carry portable shrines through neighbourhood streets.",
    "Sushi chefs train for years to master rice seasoning and knife technique.",
    "Calligraphy students practise brush strokes to express balance and rhythm.",
    "Gift wrapping follows careful folding customs that honour the recipient.",
    "Hot spring bathing has its own etiquette, including washing before entering the water.",
];

/// Deterministic English prose of at least `words` words about `topic`.
pub fn culture_text(topic: &str, words: usize) -> String {
    let mut out = String::new();
    let mut count = 0;
    let mut i = 0;
    while count < words {
        let sentence = if i % 3 == 0 {
            format!("{topic} shapes daily life in part {i} of this lesson.")
        } else {
            SENTENCES[i % SENTENCES.len()].to_string()
        };
        count += sentence.split_whitespace().count();
        out.push_str(&sentence);
        out.push(if i % 4 == 3 { '\n' } else { ' ' });
        i += 1;
    }
    out.trim_end().to_string()
}
