//! In-memory application state and the changes that mutate it.
//!
//! Every mutation is expressed as a list of [`Change`]s. The database writes
//! the list in one transaction and the same list is then folded into
//! [`State`], so memory never runs ahead of what is stored.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use icls_core::domain::{
    Catalog, Category, CategoryId, ContentUnit, Country, CountryId, Enrollment, FriendRequestId, LearnerId,
    LearnerProfile, Lesson, LessonId, ProgressState, QuizId, SummaryId, UnitId,
};
use icls_core::gamification::{Badge, CoinLedgerEntry, LearnerLedger, Streak, XpLedgerEntry};
use icls_core::proficiency::{EngagementEvent, EngagementStats};
use icls_core::treasury::Summary;
use icls_core::worldwise::{QuestionFeedback, Quiz};
use icls_core::{EngagementStats64, Scribe64, VectorRecord64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub learner_id: LearnerId,
    pub expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FriendState {
    Pending,
    Accepted,
    Declined,
}

impl FriendState {
    pub fn as_str(self) -> &'static str {
        match self {
            FriendState::Pending => "pending",
            FriendState::Accepted => "accepted",
            FriendState::Declined => "declined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(FriendState::Pending),
            "accepted" => Some(FriendState::Accepted),
            "declined" => Some(FriendState::Declined),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendRequest {
    pub request_id: FriendRequestId,
    pub from_learner: LearnerId,
    pub to_learner: LearnerId,
    pub state: FriendState,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizResultRecord {
    pub learner_id: LearnerId,
    pub quiz_id: QuizId,
    pub unit_id: UnitId,
    pub correct_count: usize,
    pub total: usize,
    pub score: f64,
    pub answers: BTreeMap<usize, u8>,
    pub per_question: Vec<QuestionFeedback>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub story_id: i64,
    pub country_id: Option<CountryId>,
    pub title: String,
    pub url: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Change {
    AddLearner(LearnerProfile),
    AddSession(Session),
    RemoveSession(String),
    /// Categories are attached by the `AddCategory` changes that follow.
    AddCountry(Country),
    AddCategory(Category),
    AddLesson(Lesson),
    AddUnit(ContentUnit),
    UpdateUnit(ContentUnit),
    RemoveCountry(CountryId),
    AddSummary(SummaryId, Summary),
    AddQuiz(Quiz),
    ReplaceVectors(UnitId, Vec<VectorRecord64>),
    AddEnrollment(Enrollment),
    SetProgress {
        learner_id: LearnerId,
        country_id: CountryId,
        unit_id: UnitId,
        state: ProgressState,
    },
    AddXp(XpLedgerEntry),
    AddCoins(CoinLedgerEntry),
    AddBadge(Badge),
    SetStreak(LearnerId, Streak),
    CompleteChallenge(LearnerId, NaiveDate),
    AddQuizResult(QuizResultRecord),
    AddEvent(EngagementEvent),
    AddFriendRequest(FriendRequest),
    SetFriendState(FriendRequestId, FriendState),
    AddStory(Story),
}

#[derive(Default)]
pub struct State {
    pub catalog: Catalog,
    pub learners: BTreeMap<LearnerId, LearnerProfile>,
    pub emails: BTreeMap<String, LearnerId>,
    pub sessions: BTreeMap<String, Session>,
    pub enrollments: BTreeMap<(LearnerId, CountryId), Enrollment>,
    pub ledgers: BTreeMap<LearnerId, LearnerLedger>,
    pub engagement: BTreeMap<(LearnerId, CountryId), EngagementStats64>,
    pub events: Vec<EngagementEvent>,
    pub summaries: BTreeMap<SummaryId, Summary>,
    pub quizzes: BTreeMap<QuizId, Quiz>,
    pub quiz_results: Vec<QuizResultRecord>,
    pub friend_requests: BTreeMap<FriendRequestId, FriendRequest>,
    pub stories: BTreeMap<i64, Story>,
    pub scribe: Arc<Scribe64>,
}

/// Everything in [`State`] as plain comparable values.
#[derive(Debug, Clone, PartialEq)]
pub struct StateExport {
    pub catalog: Catalog,
    pub learners: Vec<(LearnerProfile, String)>,
    pub sessions: Vec<Session>,
    pub enrollments: Vec<Enrollment>,
    pub ledgers: Vec<LearnerLedger>,
    pub engagement: Vec<EngagementStats64>,
    pub events: Vec<EngagementEvent>,
    pub summaries: Vec<(SummaryId, Summary)>,
    pub quizzes: Vec<Quiz>,
    pub quiz_results: Vec<QuizResultRecord>,
    pub friend_requests: Vec<FriendRequest>,
    pub stories: Vec<Story>,
    pub vectors: BTreeMap<UnitId, Vec<VectorRecord64>>,
}

fn next_id(last: Option<i64>) -> i64 {
    last.map_or(1, |id| id + 1)
}

impl State {
    pub fn export(&self) -> StateExport {
        StateExport {
            catalog: self.catalog.clone(),
            learners: self
                .learners
                .values()
                .map(|p| (p.clone(), p.password_digest.clone()))
                .collect(),
            sessions: self.sessions.values().cloned().collect(),
            enrollments: self.enrollments.values().cloned().collect(),
            ledgers: self.ledgers.values().cloned().collect(),
            engagement: self.engagement.values().cloned().collect(),
            events: self.events.clone(),
            summaries: self.summaries.iter().map(|(id, s)| (*id, s.clone())).collect(),
            quizzes: self.quizzes.values().cloned().collect(),
            quiz_results: self.quiz_results.clone(),
            friend_requests: self.friend_requests.values().cloned().collect(),
            stories: self.stories.values().cloned().collect(),
            vectors: self.scribe.store().export(),
        }
    }

    pub fn next_learner_id(&self) -> LearnerId {
        LearnerId(next_id(self.learners.keys().last().map(|id| id.0)))
    }

    pub fn next_country_id(&self) -> CountryId {
        CountryId(next_id(self.catalog.countries.keys().last().map(|id| id.0)))
    }

    pub fn next_category_id(&self) -> CategoryId {
        CategoryId(next_id(self.catalog.categories.keys().last().map(|id| id.0)))
    }

    pub fn next_lesson_id(&self) -> LessonId {
        LessonId(next_id(self.catalog.lessons.keys().last().map(|id| id.0)))
    }

    pub fn next_unit_id(&self) -> UnitId {
        UnitId(next_id(self.catalog.units.keys().last().map(|id| id.0)))
    }

    pub fn next_summary_id(&self) -> SummaryId {
        SummaryId(next_id(self.summaries.keys().last().map(|id| id.0)))
    }

    pub fn next_quiz_id(&self) -> QuizId {
        QuizId(next_id(self.quizzes.keys().last().map(|id| id.0)))
    }

    pub fn next_friend_request_id(&self) -> FriendRequestId {
        FriendRequestId(next_id(self.friend_requests.keys().last().map(|id| id.0)))
    }

    pub fn next_story_id(&self) -> i64 {
        next_id(self.stories.keys().last().copied())
    }

    pub fn summary_of_unit(&self, unit: UnitId) -> Option<&Summary> {
        let id = self.catalog.units.get(&unit)?.summary_id?;
        self.summaries.get(&id)
    }

    pub fn quiz_of_unit(&self, unit: UnitId) -> Option<&Quiz> {
        let id = self.catalog.units.get(&unit)?.quiz_id?;
        self.quizzes.get(&id)
    }

    pub fn learner_enrollments(&self, learner: LearnerId) -> Vec<Enrollment> {
        self.enrollments
            .range((learner, CountryId(i64::MIN))..=(learner, CountryId(i64::MAX)))
            .map(|(_, e)| e.clone())
            .collect()
    }

    pub fn progress(&self, learner: LearnerId, unit: UnitId) -> ProgressState {
        self.catalog
            .country_of_unit(unit)
            .and_then(|c| self.enrollments.get(&(learner, c)))
            .map_or(ProgressState::NotStarted, |e| e.progress(unit))
    }

    /// Accepted friendships in either direction.
    pub fn friends_of(&self, learner: LearnerId) -> BTreeSet<LearnerId> {
        self.friend_requests
            .values()
            .filter(|r| r.state == FriendState::Accepted)
            .filter_map(|r| {
                if r.from_learner == learner {
                    Some(r.to_learner)
                } else if r.to_learner == learner {
                    Some(r.from_learner)
                } else {
                    None
                }
            })
            .collect()
    }

    /// `(unit, score)` for every quiz result of the learner.
    pub fn learner_scores(&self, learner: LearnerId) -> Vec<(UnitId, f64)> {
        self.quiz_results
            .iter()
            .filter(|r| r.learner_id == learner)
            .map(|r| (r.unit_id, r.score))
            .collect()
    }

    /// Quizzes of published units in id order; the daily challenge cycles through them.
    pub fn published_quizzes(&self) -> Vec<QuizId> {
        self.quizzes
            .values()
            .filter(|q| self.catalog.units.get(&q.unit_id).is_some_and(|u| u.is_published()))
            .map(|q| q.quiz_id)
            .collect()
    }

    pub fn apply(&mut self, change: Change) {
        match change {
            Change::AddLearner(profile) => {
                self.emails.insert(profile.email.clone(), profile.learner_id);
                self.ledgers.insert(
                    profile.learner_id,
                    LearnerLedger::new(profile.learner_id, profile.created_at),
                );
                self.learners.insert(profile.learner_id, profile);
            }
            Change::AddSession(session) => {
                self.sessions.insert(session.token.clone(), session);
            }
            Change::RemoveSession(token) => {
                self.sessions.remove(&token);
            }
            Change::AddCountry(mut country) => {
                country.categories.clear();
                self.catalog.countries.insert(country.country_id, country);
            }
            Change::AddCategory(mut category) => {
                category.lessons.clear();
                if let Some(country) = self.catalog.countries.get_mut(&category.country_id) {
                    country.categories.push(category.category_id);
                }
                self.catalog.categories.insert(category.category_id, category);
            }
            Change::AddLesson(mut lesson) => {
                lesson.content_units.clear();
                if let Some(category) = self.catalog.categories.get_mut(&lesson.category_id) {
                    category.lessons.push(lesson.lesson_id);
                }
                self.catalog.lessons.insert(lesson.lesson_id, lesson);
            }
            Change::AddUnit(unit) => {
                if let Some(lesson) = self.catalog.lessons.get_mut(&unit.lesson_id) {
                    lesson.content_units.push(unit.unit_id);
                }
                self.catalog.units.insert(unit.unit_id, unit);
            }
            Change::UpdateUnit(unit) => {
                self.catalog.units.insert(unit.unit_id, unit);
            }
            Change::RemoveCountry(country_id) => self.remove_country(country_id),
            Change::AddSummary(id, summary) => {
                if let Some(unit) = self.catalog.units.get_mut(&summary.unit_id) {
                    unit.summary_id = Some(id);
                }
                self.summaries.insert(id, summary);
            }
            Change::AddQuiz(quiz) => {
                if let Some(unit) = self.catalog.units.get_mut(&quiz.unit_id) {
                    unit.quiz_id = Some(quiz.quiz_id);
                }
                self.quizzes.insert(quiz.quiz_id, quiz);
            }
            Change::ReplaceVectors(unit, records) => {
                self.scribe.store().replace_unit(unit, records);
            }
            Change::AddEnrollment(enrollment) => {
                self.enrollments
                    .insert((enrollment.learner_id, enrollment.country_id), enrollment);
            }
            Change::SetProgress {
                learner_id,
                country_id,
                unit_id,
                state,
            } => {
                if let Some(e) = self.enrollments.get_mut(&(learner_id, country_id)) {
                    e.unit_progress.insert(unit_id, state);
                }
            }
            Change::AddXp(entry) => {
                if let Some(ledger) = self.ledgers.get_mut(&entry.learner_id) {
                    ledger.apply_xp(entry);
                }
            }
            Change::AddCoins(entry) => {
                if let Some(ledger) = self.ledgers.get_mut(&entry.learner_id) {
                    ledger.apply_coins(entry);
                }
            }
            Change::AddBadge(badge) => {
                if let Some(ledger) = self.ledgers.get_mut(&badge.learner_id) {
                    ledger.apply_badge(badge);
                }
            }
            Change::SetStreak(learner, streak) => {
                if let Some(ledger) = self.ledgers.get_mut(&learner) {
                    ledger.apply_streak(streak);
                }
            }
            Change::CompleteChallenge(learner, date) => {
                if let Some(ledger) = self.ledgers.get_mut(&learner) {
                    ledger.record_challenge_completion(date);
                }
            }
            Change::AddQuizResult(record) => self.quiz_results.push(record),
            Change::AddEvent(event) => {
                let stats = self
                    .engagement
                    .entry((event.learner_id, event.country_id))
                    .or_insert_with(|| EngagementStats::empty(event.learner_id, event.country_id));
                // events are validated before they are planned
                stats.record(&event).expect("validated engagement event");
                self.events.push(event);
            }
            Change::AddFriendRequest(request) => {
                self.friend_requests.insert(request.request_id, request);
            }
            Change::SetFriendState(id, state) => {
                if let Some(r) = self.friend_requests.get_mut(&id) {
                    r.state = state;
                }
            }
            Change::AddStory(story) => {
                self.stories.insert(story.story_id, story);
            }
        }
    }

    fn remove_country(&mut self, country_id: CountryId) {
        let Some(country) = self.catalog.countries.remove(&country_id) else {
            return;
        };
        for category_id in country.categories {
            let Some(category) = self.catalog.categories.remove(&category_id) else {
                continue;
            };
            for lesson_id in category.lessons {
                let Some(lesson) = self.catalog.lessons.remove(&lesson_id) else {
                    continue;
                };
                for unit_id in lesson.content_units {
                    if let Some(unit) = self.catalog.units.remove(&unit_id) {
                        if let Some(id) = unit.summary_id {
                            self.summaries.remove(&id);
                        }
                        if let Some(id) = unit.quiz_id {
                            self.quizzes.remove(&id);
                        }
                    }
                    self.scribe.store().remove_unit(unit_id);
                }
            }
        }
        self.stories.retain(|_, s| s.country_id != Some(country_id));
    }
}
