//! Learner identity, the content hierarchy and the progress ladder.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_type {
    ($($(#[$meta:meta])* $name:ident),* $(,)?) => {$(
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub i64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}

id_type!(
    LearnerId,
    CountryId,
    CategoryId,
    LessonId,
    UnitId,
    SummaryId,
    QuizId,
    FriendRequestId,
);

/// Identifies one chunk of a unit's text by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkId {
    pub unit_id: UnitId,
    pub ordinal: u32,
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.unit_id, self.ordinal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("email already registered")]
    DuplicateEmail,
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("unknown learner {0}")]
    UnknownLearner(LearnerId),
    #[error("unknown country {0}")]
    UnknownCountry(CountryId),
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
    #[error("unit {unit} cannot jump from {from} to {to}")]
    SkippedRung {
        unit: UnitId,
        from: ProgressState,
        to: ProgressState,
    },
    #[error("unit {unit} is already at {current}, cannot move to {to}")]
    RegressionAttempt {
        unit: UnitId,
        current: ProgressState,
        to: ProgressState,
    },
    #[error("unknown category name `{0}`")]
    UnknownCategoryName(String),
}

/// The fixed category catalog every country course is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CategoryName {
    Art,
    Music,
    Cinema,
    Literature,
    Festivals,
    Fashion,
    Cuisine,
    Beverage,
    Customs,
    Dance,
    Travel,
}

impl CategoryName {
    pub const ALL: [CategoryName; 11] = [
        CategoryName::Art,
        CategoryName::Music,
        CategoryName::Cinema,
        CategoryName::Literature,
        CategoryName::Festivals,
        CategoryName::Fashion,
        CategoryName::Cuisine,
        CategoryName::Beverage,
        CategoryName::Customs,
        CategoryName::Dance,
        CategoryName::Travel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryName::Art => "Art",
            CategoryName::Music => "Music",
            CategoryName::Cinema => "Cinema",
            CategoryName::Literature => "Literature",
            CategoryName::Festivals => "Festivals",
            CategoryName::Fashion => "Fashion",
            CategoryName::Cuisine => "Cuisine",
            CategoryName::Beverage => "Beverage",
            CategoryName::Customs => "Customs",
            CategoryName::Dance => "Dance",
            CategoryName::Travel => "Travel",
        }
    }
}

impl fmt::Display for CategoryName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CategoryName {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        CategoryName::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| DomainError::UnknownCategoryName(s.to_string()))
    }
}

/// Rungs of the per-unit progress ladder, in the only order they may be reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressState {
    NotStarted,
    Watched,
    SummaryTested,
    PracticeTested,
}

impl ProgressState {
    pub const LADDER: [ProgressState; 4] = [
        ProgressState::NotStarted,
        ProgressState::Watched,
        ProgressState::SummaryTested,
        ProgressState::PracticeTested,
    ];

    pub fn next(self) -> Option<ProgressState> {
        match self {
            ProgressState::NotStarted => Some(ProgressState::Watched),
            ProgressState::Watched => Some(ProgressState::SummaryTested),
            ProgressState::SummaryTested => Some(ProgressState::PracticeTested),
            ProgressState::PracticeTested => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProgressState::NotStarted => "not_started",
            ProgressState::Watched => "watched",
            ProgressState::SummaryTested => "summary_tested",
            ProgressState::PracticeTested => "practice_tested",
        }
    }
}

impl fmt::Display for ProgressState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProgressState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProgressState::LADDER
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown progress state `{s}`"))
    }
}

/// Fields submitted at sign-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFields {
    pub name: String,
    pub email: String,
    pub password: String,
    pub immersion_country: CountryId,
    #[serde(default)]
    pub learning_motivation: String,
    pub self_rated_knowledge: i64,
    pub daily_goal_minutes: i64,
    #[serde(default)]
    pub notifications_opt_in: bool,
    #[serde(default)]
    pub org_id: Option<String>,
}

impl ProfileFields {
    /// Checks every field-level rule; email uniqueness is the caller's concern.
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let email = normalize_email(&self.email);
        let valid_email = match email.split_once('@') {
            Some((local, domain)) => !local.is_empty() && !domain.is_empty() && !domain.contains('@'),
            None => false,
        };
        if !valid_email || email.chars().any(char::is_whitespace) {
            return Err(invalid("email", "not a valid address"));
        }
        if self.password.is_empty() {
            return Err(invalid("password", "must not be empty"));
        }
        if !(1..=5).contains(&self.self_rated_knowledge) {
            return Err(invalid("self_rated_knowledge", "must be between 1 and 5"));
        }
        if self.daily_goal_minutes <= 0 {
            return Err(invalid("daily_goal_minutes", "must be positive"));
        }
        if matches!(&self.org_id, Some(org) if org.trim().is_empty()) {
            return Err(invalid("org_id", "must not be blank when present"));
        }
        Ok(())
    }
}

fn invalid(field: &'static str, reason: &str) -> DomainError {
    DomainError::InvalidField {
        field,
        reason: reason.to_string(),
    }
}

pub fn normalize_email(email: &str) -> String {
    email.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerProfile {
    pub learner_id: LearnerId,
    pub name: String,
    pub email: String,
    #[serde(skip_serializing)]
    pub password_digest: String,
    pub immersion_country: CountryId,
    pub learning_motivation: String,
    pub self_rated_knowledge: i64,
    pub daily_goal_minutes: i64,
    pub notifications_opt_in: bool,
    pub org_id: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl LearnerProfile {
    /// Builds a profile from validated fields. The password must already be digested.
    pub fn from_fields(
        learner_id: LearnerId,
        fields: &ProfileFields,
        password_digest: String,
        created_at: DateTime<Utc>,
    ) -> Result<Self, DomainError> {
        fields.validate()?;
        Ok(LearnerProfile {
            learner_id,
            name: fields.name.trim().to_string(),
            email: normalize_email(&fields.email),
            password_digest,
            immersion_country: fields.immersion_country,
            learning_motivation: fields.learning_motivation.clone(),
            self_rated_knowledge: fields.self_rated_knowledge,
            daily_goal_minutes: fields.daily_goal_minutes,
            notifications_opt_in: fields.notifications_opt_in,
            org_id: fields.org_id.as_ref().map(|o| o.trim().to_string()),
            created_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Country {
    pub country_id: CountryId,
    pub name: String,
    pub categories: Vec<CategoryId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub category_id: CategoryId,
    pub country_id: CountryId,
    pub name: CategoryName,
    pub lessons: Vec<LessonId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lesson {
    pub lesson_id: LessonId,
    pub category_id: CategoryId,
    pub title: String,
    pub content_units: Vec<UnitId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Document,
    VideoTranscript,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Document => "document",
            UnitKind::VideoTranscript => "video_transcript",
        }
    }
}

impl FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document" => Ok(UnitKind::Document),
            "video_transcript" => Ok(UnitKind::VideoTranscript),
            other => Err(format!("unknown unit kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Draft,
    Published,
}

/// A failed stage of the content pipeline, kept on draft units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentUnit {
    pub unit_id: UnitId,
    pub lesson_id: LessonId,
    pub kind: UnitKind,
    pub source_name: String,
    pub raw_text: String,
    pub summary_id: Option<SummaryId>,
    pub quiz_id: Option<QuizId>,
    pub indexed: bool,
    pub status: UnitStatus,
    pub errors: Vec<StageError>,
}

impl ContentUnit {
    pub fn is_published(&self) -> bool {
        self.status == UnitStatus::Published
    }
}

/// A learner's enrollment in one country course with per-unit progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enrollment {
    pub learner_id: LearnerId,
    pub country_id: CountryId,
    pub enrolled_at: DateTime<Utc>,
    pub unit_progress: BTreeMap<UnitId, ProgressState>,
}

impl Enrollment {
    pub fn new(
        learner_id: LearnerId,
        country_id: CountryId,
        units: impl IntoIterator<Item = UnitId>,
        enrolled_at: DateTime<Utc>,
    ) -> Self {
        Enrollment {
            learner_id,
            country_id,
            enrolled_at,
            unit_progress: units.into_iter().map(|u| (u, ProgressState::NotStarted)).collect(),
        }
    }

    /// Units published after enrollment have no entry and count as not started.
    pub fn progress(&self, unit: UnitId) -> ProgressState {
        self.unit_progress
            .get(&unit)
            .copied()
            .unwrap_or(ProgressState::NotStarted)
    }

    /// Checks that `to` is exactly one rung above the unit's current state.
    pub fn check_advance(&self, unit: UnitId, to: ProgressState) -> Result<(), DomainError> {
        let current = self.progress(unit);
        if to <= current {
            return Err(DomainError::RegressionAttempt { unit, current, to });
        }
        if current.next() != Some(to) {
            return Err(DomainError::SkippedRung {
                unit,
                from: current,
                to,
            });
        }
        Ok(())
    }

    pub fn advance(&mut self, unit: UnitId, to: ProgressState) -> Result<ProgressState, DomainError> {
        self.check_advance(unit, to)?;
        let previous = self.progress(unit);
        self.unit_progress.insert(unit, to);
        Ok(previous)
    }
}

/// The full content hierarchy with lookup helpers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub countries: BTreeMap<CountryId, Country>,
    pub categories: BTreeMap<CategoryId, Category>,
    pub lessons: BTreeMap<LessonId, Lesson>,
    pub units: BTreeMap<UnitId, ContentUnit>,
}

impl Catalog {
    pub fn country_by_name(&self, name: &str) -> Option<&Country> {
        let name = name.trim();
        self.countries.values().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn category_named(&self, country: CountryId, name: CategoryName) -> Option<&Category> {
        self.countries
            .get(&country)?
            .categories
            .iter()
            .find_map(|id| self.categories.get(id).filter(|c| c.name == name))
    }

    pub fn lesson_of_unit(&self, unit: UnitId) -> Option<&Lesson> {
        self.lessons.get(&self.units.get(&unit)?.lesson_id)
    }

    pub fn category_of_unit(&self, unit: UnitId) -> Option<&Category> {
        self.categories.get(&self.lesson_of_unit(unit)?.category_id)
    }

    pub fn country_of_unit(&self, unit: UnitId) -> Option<CountryId> {
        self.category_of_unit(unit).map(|c| c.country_id)
    }

    pub fn country_of_lesson(&self, lesson: LessonId) -> Option<CountryId> {
        let category = self.lessons.get(&lesson)?.category_id;
        self.categories.get(&category).map(|c| c.country_id)
    }

    /// Published units of a lesson in lesson order.
    pub fn published_units_of_lesson(&self, lesson: LessonId) -> Vec<UnitId> {
        self.lessons
            .get(&lesson)
            .map(|l| {
                l.content_units
                    .iter()
                    .copied()
                    .filter(|u| self.units.get(u).is_some_and(ContentUnit::is_published))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Lessons of a category holding at least one published unit, in category order.
    pub fn published_lessons_of_category(&self, category: CategoryId) -> Vec<LessonId> {
        self.categories
            .get(&category)
            .map(|c| {
                c.lessons
                    .iter()
                    .copied()
                    .filter(|l| !self.published_units_of_lesson(*l).is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Published units of a country in catalog order.
    pub fn published_units_of_country(&self, country: CountryId) -> Vec<UnitId> {
        let Some(country) = self.countries.get(&country) else {
            return Vec::new();
        };
        country
            .categories
            .iter()
            .flat_map(|c| self.published_lessons_of_category(*c))
            .flat_map(|l| self.published_units_of_lesson(l))
            .collect()
    }

    /// Published lessons in catalog order (country, category, lesson position).
    pub fn published_lessons(&self) -> Vec<LessonId> {
        self.countries
            .values()
            .flat_map(|c| c.categories.iter())
            .flat_map(|c| self.published_lessons_of_category(*c))
            .collect()
    }

    /// A lesson is finished once every published unit reached the summary test.
    pub fn lesson_finished(&self, lesson: LessonId, progress: impl Fn(UnitId) -> ProgressState) -> bool {
        let units = self.published_units_of_lesson(lesson);
        !units.is_empty() && units.into_iter().all(|u| progress(u) >= ProgressState::SummaryTested)
    }
}
