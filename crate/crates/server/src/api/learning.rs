use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::State as AppState;
use axum::Json;
use chrono::{DateTime, Utc};
use icls_core::domain::{ChunkId, LearnerId, LessonId, ProgressState, QuizId, UnitId};
use icls_core::gamification::BadgeKind;
use icls_core::proficiency::{category_quiz_means, EngagementEvent, EngagementKind};
use icls_core::scribe::DEFAULT_K;
use icls_core::treasury::SummaryStrategy;
use icls_core::worldwise::{grade, GradeReport, Quiz, Submission, OPTIONS_PER_QUESTION};
use serde::{Deserialize, Serialize};

use super::{blocking, enrollment_for_unit, published_unit, Body, Id};
use crate::app::App;
use crate::auth::AuthLearner;
use crate::error::ApiError;
use crate::model::{Change, QuizResultRecord, State};

const MAX_CHAT_K: usize = 16;

/// A question as learners see it: no answer key.
#[derive(Debug, Serialize)]
pub struct QuestionView {
    pub ordinal: usize,
    pub stem: String,
    pub options: [String; OPTIONS_PER_QUESTION],
}

#[derive(Debug, Serialize)]
pub struct QuizView {
    pub quiz_id: QuizId,
    pub unit_id: UnitId,
    pub question_count: usize,
    pub questions: Vec<QuestionView>,
}

pub fn quiz_view(quiz: &Quiz) -> QuizView {
    QuizView {
        quiz_id: quiz.quiz_id,
        unit_id: quiz.unit_id,
        question_count: quiz.questions.len(),
        questions: quiz
            .questions
            .iter()
            .enumerate()
            .map(|(ordinal, q)| QuestionView {
                ordinal,
                stem: q.stem.clone(),
                options: q.options.clone(),
            })
            .collect(),
    }
}

fn event(
    learner: LearnerId,
    country: icls_core::domain::CountryId,
    kind: EngagementKind,
    at: DateTime<Utc>,
) -> EngagementEvent {
    EngagementEvent {
        learner_id: learner,
        country_id: country,
        kind,
        at,
    }
}

#[derive(Debug, Deserialize)]
pub struct WatchRequest {
    pub seconds: u64,
}

#[derive(Debug, Serialize)]
pub struct WatchResponse {
    pub unit_id: UnitId,
    pub progress: ProgressState,
    pub xp_awarded: u32,
    pub total_xp: u64,
}

pub async fn watch(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(unit): Id<UnitId>,
    Body(request): Body<WatchRequest>,
) -> Result<Json<WatchResponse>, ApiError> {
    let now = app.now();
    let learner = auth.learner_id;
    let mut inner = app.lock();
    let state = &inner.state;
    let (country, enrollment) = enrollment_for_unit(state, learner, unit)?;
    let spent = event(
        learner,
        country,
        EngagementKind::TimeSpent {
            seconds: request.seconds,
        },
        now,
    );
    spent
        .validate()
        .map_err(|e| ApiError::invalid("invalid-field", e.to_string()))?;
    let mut changes = vec![Change::AddEvent(spent)];
    let mut xp_awarded = 0;
    let mut progress = enrollment.progress(unit);
    if progress == ProgressState::NotStarted {
        progress = ProgressState::Watched;
        let entry = state.ledgers[&learner].plan_lesson_xp(app.rules(), unit, progress, now)?;
        xp_awarded = entry.amount;
        changes.push(Change::SetProgress {
            learner_id: learner,
            country_id: country,
            unit_id: unit,
            state: progress,
        });
        changes.push(Change::AddXp(entry));
    }
    inner.commit(changes)?;
    Ok(Json(WatchResponse {
        unit_id: unit,
        progress,
        xp_awarded,
        total_xp: inner.state.ledgers[&learner].total_xp(),
    }))
}

#[derive(Debug, Serialize)]
pub struct SummaryView {
    pub unit_id: UnitId,
    pub text: String,
    pub word_count: usize,
    pub strategy: SummaryStrategy,
    pub generated_at: DateTime<Utc>,
}

pub async fn summary(
    AppState(app): AppState<Arc<App>>,
    _auth: AuthLearner,
    Id(unit): Id<UnitId>,
) -> Result<Json<SummaryView>, ApiError> {
    let inner = app.lock();
    published_unit(&inner.state, unit)?;
    let summary = inner
        .state
        .summary_of_unit(unit)
        .ok_or_else(|| ApiError::not_found(format!("summary of unit {unit}")))?;
    Ok(Json(SummaryView {
        unit_id: unit,
        text: summary.text.clone(),
        word_count: summary.word_count,
        strategy: summary.strategy,
        generated_at: summary.generated_at,
    }))
}

pub async fn unit_quiz(
    AppState(app): AppState<Arc<App>>,
    _auth: AuthLearner,
    Id(unit): Id<UnitId>,
) -> Result<Json<QuizView>, ApiError> {
    let inner = app.lock();
    published_unit(&inner.state, unit)?;
    let quiz = inner
        .state
        .quiz_of_unit(unit)
        .ok_or_else(|| ApiError::not_found(format!("quiz of unit {unit}")))?;
    Ok(Json(quiz_view(quiz)))
}

/// Quizzes of every published unit of the lesson, in lesson order.
pub async fn lesson_quizzes(
    AppState(app): AppState<Arc<App>>,
    _auth: AuthLearner,
    Id(lesson): Id<LessonId>,
) -> Result<Json<Vec<QuizView>>, ApiError> {
    let inner = app.lock();
    let units = inner.state.catalog.published_units_of_lesson(lesson);
    if units.is_empty() {
        return Err(ApiError::not_found(format!("lesson {lesson}")));
    }
    Ok(Json(
        units
            .into_iter()
            .filter_map(|u| inner.state.quiz_of_unit(u))
            .map(quiz_view)
            .collect(),
    ))
}

#[derive(Debug, Deserialize)]
pub struct SubmitRequest {
    /// Question ordinal (0-based) to chosen option (1-based).
    pub answers: BTreeMap<usize, u8>,
}

#[derive(Debug, Serialize)]
pub struct SubmitResponse {
    pub quiz_id: QuizId,
    pub unit_id: UnitId,
    pub grade: GradeReport,
    pub xp_awarded: u32,
    pub coins_awarded: u32,
    pub progress: ProgressState,
    pub badges_awarded: Vec<BadgeKind>,
    pub daily_challenge_completed: bool,
    pub total_xp: u64,
    pub total_coins: u64,
}

/// Grades and stores a submission with every reward it earns, all in one transaction.
pub async fn submit(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(quiz_id): Id<QuizId>,
    Body(request): Body<SubmitRequest>,
) -> Result<Json<SubmitResponse>, ApiError> {
    let now = app.now();
    let learner = auth.learner_id;
    let rules = app.rules();
    let mut inner = app.lock();
    let state = &inner.state;
    let quiz = state
        .quizzes
        .get(&quiz_id)
        .ok_or_else(|| ApiError::not_found(format!("quiz {quiz_id}")))?;
    let unit = quiz.unit_id;
    let (country, enrollment) = enrollment_for_unit(state, learner, unit)?;
    let report = grade(
        quiz,
        &Submission {
            learner_id: learner,
            quiz_id,
            answers: request.answers.clone(),
            submitted_at: now,
        },
    )?;
    let ledger = &state.ledgers[&learner];
    let mut changes = vec![
        Change::AddQuizResult(QuizResultRecord {
            learner_id: learner,
            quiz_id,
            unit_id: unit,
            correct_count: report.correct_count,
            total: report.total,
            score: report.score,
            answers: request.answers,
            per_question: report.per_question.clone(),
            submitted_at: now,
        }),
        Change::AddEvent(event(learner, country, EngagementKind::QuizAttempt, now)),
        Change::AddEvent(event(
            learner,
            country,
            EngagementKind::QuizResult { score: report.score },
            now,
        )),
    ];

    let coins = ledger.plan_quiz_coins(rules, quiz_id, report.correct_count as u32, now);
    let coins_awarded = coins.as_ref().map_or(0, |c| c.amount);
    changes.extend(coins.map(Change::AddCoins));

    let mut progress = enrollment.progress(unit);
    let mut xp_awarded = 0;
    if progress == ProgressState::Watched {
        progress = ProgressState::SummaryTested;
        let entry = ledger.plan_lesson_xp(rules, unit, progress, now)?;
        xp_awarded = entry.amount;
        changes.push(Change::SetProgress {
            learner_id: learner,
            country_id: country,
            unit_id: unit,
            state: progress,
        });
        changes.push(Change::AddXp(entry));
    }

    let today = now.date_naive();
    let daily_challenge_completed =
        super::social::daily_quiz(state, today) == Some(quiz_id) && !ledger.challenge_completed(today);
    if daily_challenge_completed {
        changes.push(Change::CompleteChallenge(learner, today));
    }

    let mut scores = state.learner_scores(learner);
    scores.push((unit, report.score));
    let means = category_quiz_means(&state.catalog, &scores);
    let after = |u: UnitId| {
        if u == unit {
            progress
        } else {
            state.progress(learner, u)
        }
    };
    let badges = ledger.plan_badges(rules, &state.catalog, after, &means, now);
    let badges_awarded = badges.iter().map(|b| b.kind).collect();
    changes.extend(badges.into_iter().map(Change::AddBadge));

    inner.commit(changes)?;
    let ledger = &inner.state.ledgers[&learner];
    Ok(Json(SubmitResponse {
        quiz_id,
        unit_id: unit,
        grade: report,
        xp_awarded,
        coins_awarded,
        progress,
        badges_awarded,
        daily_challenge_completed,
        total_xp: ledger.total_xp(),
        total_coins: ledger.total_coins(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    pub question: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ChatResponse {
    pub unit_id: UnitId,
    pub question: String,
    pub answer: String,
    pub source_chunks: Vec<ChunkId>,
    pub source_count: usize,
}

pub async fn chat(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(unit): Id<UnitId>,
    Body(request): Body<ChatRequest>,
) -> Result<Json<ChatResponse>, ApiError> {
    let k = request.k.unwrap_or(DEFAULT_K);
    if k == 0 || k > MAX_CHAT_K {
        return Err(ApiError::invalid(
            "invalid-field",
            format!("k must lie in 1..={MAX_CHAT_K}"),
        ));
    }
    let scribe = {
        let inner = app.lock();
        enrollment_for_unit(&inner.state, auth.learner_id, unit)?;
        inner.state.scribe.clone()
    };
    let gateway = app.gateway();
    let question = request.question;
    let answer = blocking(move || Ok(scribe.chat(&gateway, unit, &question, k)?)).await?;
    Ok(Json(ChatResponse {
        unit_id: unit,
        question: answer.question,
        answer: answer.answer_text,
        source_count: answer.used_chunk_ids.len(),
        source_chunks: answer.used_chunk_ids,
    }))
}

/// A question the learner got wrong on their latest attempt, else one picked by learner and unit.
pub fn practice_ordinal(state: &State, learner: LearnerId, quiz: &Quiz) -> usize {
    let missed = state
        .quiz_results
        .iter()
        .rev()
        .find(|r| r.learner_id == learner && r.quiz_id == quiz.quiz_id)
        .and_then(|r| r.per_question.iter().position(|f| !f.correct));
    missed.unwrap_or_else(|| (learner.0 + quiz.unit_id.0).rem_euclid(quiz.questions.len() as i64) as usize)
}

#[derive(Debug, Serialize)]
pub struct PracticeView {
    pub unit_id: UnitId,
    pub quiz_id: QuizId,
    pub progress: ProgressState,
    pub question: QuestionView,
}

fn practice_quiz(state: &State, unit: UnitId) -> Result<&Quiz, ApiError> {
    state
        .quiz_of_unit(unit)
        .filter(|q| !q.questions.is_empty())
        .ok_or_else(|| ApiError::not_found(format!("quiz of unit {unit}")))
}

pub async fn practice_question(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(unit): Id<UnitId>,
) -> Result<Json<PracticeView>, ApiError> {
    let inner = app.lock();
    let state = &inner.state;
    let (_, enrollment) = enrollment_for_unit(state, auth.learner_id, unit)?;
    let quiz = practice_quiz(state, unit)?;
    let ordinal = practice_ordinal(state, auth.learner_id, quiz);
    let question = &quiz.questions[ordinal];
    Ok(Json(PracticeView {
        unit_id: unit,
        quiz_id: quiz.quiz_id,
        progress: enrollment.progress(unit),
        question: QuestionView {
            ordinal,
            stem: question.stem.clone(),
            options: question.options.clone(),
        },
    }))
}

#[derive(Debug, Deserialize)]
pub struct PracticeAnswer {
    pub ordinal: usize,
    pub answer: u8,
}

#[derive(Debug, Serialize)]
pub struct PracticeResult {
    pub unit_id: UnitId,
    pub correct: bool,
    pub progress: ProgressState,
    pub xp_awarded: u32,
    pub total_xp: u64,
}

/// A correct answer after the summary test completes the practice tier.
pub async fn practice_answer(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(unit): Id<UnitId>,
    Body(request): Body<PracticeAnswer>,
) -> Result<Json<PracticeResult>, ApiError> {
    let now = app.now();
    let learner = auth.learner_id;
    let mut inner = app.lock();
    let state = &inner.state;
    let (country, enrollment) = enrollment_for_unit(state, learner, unit)?;
    let quiz = practice_quiz(state, unit)?;
    let question = quiz.questions.get(request.ordinal).ok_or_else(|| {
        ApiError::invalid(
            "invalid-field",
            format!("question {} is outside the quiz", request.ordinal),
        )
    })?;
    if !(1..=OPTIONS_PER_QUESTION as u8).contains(&request.answer) {
        return Err(ApiError::invalid(
            "invalid-field",
            format!("answer {} is not an option number", request.answer),
        ));
    }
    let correct = question.answer_index == request.answer;
    let mut progress = enrollment.progress(unit);
    let mut xp_awarded = 0;
    if correct && progress == ProgressState::SummaryTested {
        progress = ProgressState::PracticeTested;
        let entry = state.ledgers[&learner].plan_lesson_xp(app.rules(), unit, progress, now)?;
        xp_awarded = entry.amount;
        inner.commit(vec![
            Change::SetProgress {
                learner_id: learner,
                country_id: country,
                unit_id: unit,
                state: progress,
            },
            Change::AddXp(entry),
        ])?;
    }
    Ok(Json(PracticeResult {
        unit_id: unit,
        correct,
        progress,
        xp_awarded,
        total_xp: inner.state.ledgers[&learner].total_xp(),
    }))
}
